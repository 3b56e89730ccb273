#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>

#include "gridcoop/kernels/kernels.hpp"
#include "gridcoop/lp.hpp"

namespace gridcoop::lp {

int LinearProgram::add_variable(double lo, double hi, double c, double s) {
  if (lo > hi) throw std::invalid_argument("lp: variable lower bound above upper bound");
  cost.push_back(c);
  lower.push_back(lo);
  upper.push_back(hi);
  start.push_back(s);
  return static_cast<int>(cost.size()) - 1;
}

int LinearProgram::add_row(std::vector<Term> terms, Sense sense, double rhs) {
  for (const auto& t : terms) {
    if (t.var < 0 || t.var >= num_variables()) throw std::invalid_argument("lp: row references unknown variable");
  }
  rows.push_back(Row{std::move(terms), sense, rhs});
  return static_cast<int>(rows.size()) - 1;
}

const char* to_string(Status status) noexcept {
  switch (status) {
    case Status::optimal: return "optimal";
    case Status::infeasible: return "infeasible";
    case Status::unbounded: return "unbounded";
    case Status::iteration_limit: return "iteration_limit";
  }
  return "unknown";
}

namespace {

class Tableau {
 public:
  Tableau(const LinearProgram& lp, const Options& opt) : opt_(opt) {
    n_struct_ = lp.num_variables();
    m_ = lp.num_rows();
    const int n_logical = m_;

    // Nonbasic starting values for structural variables.
    x_.assign(static_cast<std::size_t>(n_struct_ + n_logical), 0.0);
    lo_ = lp.lower;
    hi_ = lp.upper;
    for (int j = 0; j < n_struct_; ++j) {
      double v = lp.start[j];
      if (std::isnan(v)) {
        v = std::isfinite(lo_[j]) ? lo_[j] : (std::isfinite(hi_[j]) ? hi_[j] : 0.0);
      }
      x_[j] = std::clamp(v, lo_[j], hi_[j]);
    }
    for (const auto& row : lp.rows) {
      switch (row.sense) {
        case Sense::le: lo_.push_back(0.0); hi_.push_back(inf); break;
        case Sense::ge: lo_.push_back(-inf); hi_.push_back(0.0); break;
        case Sense::eq: lo_.push_back(0.0); hi_.push_back(0.0); break;
      }
    }

    // Decide which rows need an artificial variable.
    std::vector<double> residual(static_cast<std::size_t>(m_));
    std::vector<int> needs_art;
    for (int i = 0; i < m_; ++i) {
      double r = lp.rows[i].rhs;
      for (const auto& t : lp.rows[i].terms) r -= t.coef * x_[t.var];
      residual[i] = r;
      const int s = n_struct_ + i;
      if (r < lo_[s] - opt_.feasibility_tol || r > hi_[s] + opt_.feasibility_tol) needs_art.push_back(i);
    }
    n_art_ = static_cast<int>(needs_art.size());
    cols_ = n_struct_ + n_logical + n_art_;
    x_.resize(static_cast<std::size_t>(cols_), 0.0);
    for (int k = 0; k < n_art_; ++k) {
      lo_.push_back(0.0);
      hi_.push_back(inf);
    }

    tab_.assign(static_cast<std::size_t>(m_) * cols_, 0.0);
    basis_.assign(static_cast<std::size_t>(m_), -1);
    is_basic_.assign(static_cast<std::size_t>(cols_), false);
    int art = 0;
    for (int i = 0; i < m_; ++i) {
      double* row = row_ptr(i);
      for (const auto& t : lp.rows[i].terms) row[t.var] += t.coef;
      const int s = n_struct_ + i;
      row[s] = 1.0;
      if (art < n_art_ && needs_art[art] == i) {
        const double clamped = std::clamp(residual[i], lo_[s], hi_[s]);
        x_[s] = clamped;
        const double gap = residual[i] - clamped;
        const double sigma = gap >= 0.0 ? 1.0 : -1.0;
        const int a = n_struct_ + n_logical + art;
        row[a] = sigma;
        // Normalise so the artificial has a unit column.
        for (int j = 0; j < cols_; ++j) row[j] *= sigma;
        basis_[i] = a;
        x_[a] = std::abs(gap);
        ++art;
      } else {
        basis_[i] = s;
        x_[s] = residual[i];
      }
      is_basic_[basis_[i]] = true;
    }
  }

  Status run(const std::vector<double>& cost, int& iterations, int max_iterations) {
    reduced_ = cost;
    reduced_.resize(static_cast<std::size_t>(cols_), 0.0);
    for (int i = 0; i < m_; ++i) {
      const double cb = reduced_cost_basis(cost, basis_[i]);
      if (cb != 0.0) {
        kernels::axpy(-cb, std::span<const double>(row_ptr(i), cols_), reduced_);
      }
    }
    int degenerate_streak = 0;
    while (true) {
      if (iterations >= max_iterations) return Status::iteration_limit;
      const bool bland = degenerate_streak > 30;
      int q = -1;
      double dir = 0.0;
      double best = 0.0;
      for (int j = 0; j < cols_; ++j) {
        if (is_basic_[j] || lo_[j] == hi_[j]) continue;
        const double d = reduced_[j];
        double dj = 0.0;
        if (d < -opt_.optimality_tol && x_[j] < hi_[j]) dj = 1.0;
        else if (d > opt_.optimality_tol && x_[j] > lo_[j]) dj = -1.0;
        if (dj == 0.0) continue;
        if (bland) {
          q = j;
          dir = dj;
          break;
        }
        if (std::abs(d) > best) {
          best = std::abs(d);
          q = j;
          dir = dj;
        }
      }
      if (q < 0) return Status::optimal;

      // Ratio test over the basic variables, then compare with the bound flip.
      double t_row = inf;
      int leave = -1;
      double leave_alpha = 0.0;
      for (int i = 0; i < m_; ++i) {
        const double alpha = tab_[static_cast<std::size_t>(i) * cols_ + q];
        if (std::abs(alpha) <= opt_.pivot_tol) continue;
        const double rate = -dir * alpha;  // change of the basic variable per unit step
        const int b = basis_[i];
        double limit = inf;
        if (rate < 0.0 && std::isfinite(lo_[b])) limit = (x_[b] - lo_[b]) / -rate;
        else if (rate > 0.0 && std::isfinite(hi_[b])) limit = (hi_[b] - x_[b]) / rate;
        if (!std::isfinite(limit)) continue;
        limit = std::max(limit, 0.0);
        bool take = false;
        if (leave < 0 || limit < t_row - 1e-12) {
          take = true;
        } else if (limit <= t_row + 1e-12) {
          take = bland ? basis_[i] < basis_[leave] : std::abs(alpha) > std::abs(leave_alpha);
        }
        if (take) {
          t_row = leave < 0 ? limit : std::min(t_row, limit);
          leave = i;
          leave_alpha = alpha;
        }
      }
      const double flip = dir > 0.0 ? hi_[q] - x_[q] : x_[q] - lo_[q];
      double t = t_row;
      if (flip < t_row - 1e-12 || leave < 0) {
        t = flip;
        leave = -1;
      }
      if (!std::isfinite(t)) return Status::unbounded;
      ++iterations;
      degenerate_streak = t < 1e-12 ? degenerate_streak + 1 : 0;

      // Move along the edge.
      const double step = dir * t;
      x_[q] += step;
      for (int i = 0; i < m_; ++i) {
        const double alpha = tab_[static_cast<std::size_t>(i) * cols_ + q];
        if (alpha != 0.0) x_[basis_[i]] -= step * alpha;
      }
      if (leave < 0) {
        x_[q] = dir > 0.0 ? hi_[q] : lo_[q];
        continue;
      }
      const int out = basis_[leave];
      const double rate = -dir * leave_alpha;
      x_[out] = rate < 0.0 ? lo_[out] : hi_[out];
      pivot(leave, q);
    }
  }

  void pivot(int r, int q) {
    double* prow = row_ptr(r);
    const double piv = prow[q];
    kernels::scale(1.0 / piv, std::span<double>(prow, cols_));
    prow[q] = 1.0;
    const std::span<const double> pr(prow, cols_);
    for (int i = 0; i < m_; ++i) {
      if (i == r) continue;
      double* row = row_ptr(i);
      const double f = row[q];
      if (f != 0.0) {
        kernels::axpy(-f, pr, std::span<double>(row, cols_));
        row[q] = 0.0;
      }
    }
    const double dq = reduced_[q];
    if (dq != 0.0) {
      kernels::axpy(-dq, pr, reduced_);
      reduced_[q] = 0.0;
    }
    is_basic_[basis_[r]] = false;
    basis_[r] = q;
    is_basic_[q] = true;
  }

  double artificial_sum() const {
    double s = 0.0;
    for (int k = 0; k < n_art_; ++k) s += x_[n_struct_ + m_ + k];
    return s;
  }

  void close_artificials() {
    for (int k = 0; k < n_art_; ++k) {
      const int a = n_struct_ + m_ + k;
      hi_[a] = 0.0;
      if (!is_basic_[a]) x_[a] = 0.0;
    }
  }

  int n_struct() const noexcept { return n_struct_; }
  int n_art() const noexcept { return n_art_; }
  int cols() const noexcept { return cols_; }
  const std::vector<double>& values() const noexcept { return x_; }

 private:
  double* row_ptr(int i) { return tab_.data() + static_cast<std::size_t>(i) * cols_; }
  static double reduced_cost_basis(const std::vector<double>& cost, int j) {
    return j < static_cast<int>(cost.size()) ? cost[j] : 0.0;
  }

  Options opt_;
  int n_struct_ = 0;
  int m_ = 0;
  int n_art_ = 0;
  int cols_ = 0;
  std::vector<double> tab_;
  std::vector<double> x_;
  std::vector<double> lo_;
  std::vector<double> hi_;
  std::vector<double> reduced_;
  std::vector<int> basis_;
  std::vector<bool> is_basic_;
};

}  // namespace

Solution solve(const LinearProgram& program, const Options& options) {
  Tableau tab(program, options);
  Solution sol;
  const int limit = options.max_iterations > 0 ? options.max_iterations : 50 * (tab.cols() + program.num_rows()) + 1000;

  if (tab.n_art() > 0) {
    std::vector<double> phase1(static_cast<std::size_t>(tab.cols()), 0.0);
    for (int k = 0; k < tab.n_art(); ++k) phase1[tab.cols() - tab.n_art() + k] = 1.0;
    const auto st = tab.run(phase1, sol.iterations, limit);
    if (st == Status::iteration_limit) {
      sol.status = st;
      return sol;
    }
    double scale = 1.0;
    for (const auto& row : program.rows) scale = std::max(scale, std::abs(row.rhs));
    if (tab.artificial_sum() > 1e-7 * scale) {
      sol.status = Status::infeasible;
      return sol;
    }
    tab.close_artificials();
  }
  sol.status = tab.run(program.cost, sol.iterations, limit);
  const auto& x = tab.values();
  sol.x.assign(x.begin(), x.begin() + tab.n_struct());
  sol.objective = 0.0;
  for (int j = 0; j < tab.n_struct(); ++j) sol.objective += program.cost[j] * sol.x[j];
  return sol;
}

}  // namespace gridcoop::lp
