#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "gridcoop/dispatch.hpp"
#include "gridcoop/errors.hpp"
#include "gridcoop/lp.hpp"

namespace gridcoop::dispatch {

namespace {

enum class EssMode { free, charge_only, discharge_only };
using Modes = std::vector<std::vector<EssMode>>;      // [ess][t]
using Commitment = std::vector<std::vector<char>>;    // [t][dg]

enum Family { bus_voltage, branch_rating, pcc_active, pcc_reactive, soc_bounds, dg_ramp, family_count };
constexpr std::array<const char*, family_count> family_names = {
    "bus_voltage", "branch_rating", "pcc_active_limit", "pcc_reactive_limit", "soc_bounds", "dg_ramp"};

// Operating point in per-unit on the MG base.
struct StepPoint {
  std::vector<double> dg_p, dg_q, ch, dis, uch, udis, ess_q, pv_q;
  double pcc_p = 0.0;
  double pcc_q = 0.0;
  grid::BusState state;
};
using Point = std::vector<StepPoint>;

struct Evaluation {
  double objective = 0.0;
  std::array<double, family_count> worst{};
  double violation_sum = 0.0;
  double merit = 0.0;
  std::vector<std::vector<double>> soc;  // [t][ess]

  double max_violation() const { return *std::max_element(worst.begin(), worst.end()); }
  Family worst_family() const {
    return static_cast<Family>(std::max_element(worst.begin(), worst.end()) - worst.begin());
  }
};

struct Outcome {
  Point point;
  Evaluation eval;
  int iterations = 0;
  std::vector<double> merits;
};

struct StepVars {
  std::vector<int> dth, dv;  // -1 at the PCC bus
  std::vector<int> dg_p, dg_q, f, ch, dis, uch, udis, ess_q, soc, pv_q;
  int pcc_p = -1;
  int pcc_q = -1;
};

struct Elastic {
  int row;
  int slack;
};

class Slp {
 public:
  Slp(const DispatchProblem& problem, const MgAssets& assets, const DispatchOptions& options,
      const Commitment& on, const Modes& modes)
      : pr_(problem), as_(assets), opt_(options), on_(on), modes_(modes) {
    const auto& net = as_.network;
    base_ = net.base_kva;
    y_ = grid::build_admittance(net);
    slack_ = net.slack_index();
    nb_ = net.size();
    T_ = static_cast<std::size_t>(pr_.steps);
    for (const auto& g : as_.dgs) dg_bus_.push_back(net.index_of(g.bus));
    for (const auto& e : as_.ess) ess_bus_.push_back(net.index_of(e.bus));
    for (const auto& p : as_.pvs) pv_bus_.push_back(net.index_of(p.bus));
    for (const auto& br : net.branches) br_ends_.emplace_back(net.index_of(br.from), net.index_of(br.to));
    for (std::size_t e = 0; e < as_.ess.size(); ++e) {
      soc0_.push_back(pr_.soc_init.empty() ? as_.ess[e].soc_init : pr_.soc_init[e]);
    }
    double scale = 1.0;
    for (double l : pr_.retail_price) scale = std::max(scale, std::abs(l) * base_ * pr_.dt_h);
    for (const auto& g : as_.dgs) {
      scale = std::max(scale, g.fuel_price * (g.b_f + 2.0 * g.a_f * g.p_max_kw) * base_ * pr_.dt_h);
    }
    penalty_ = 1e4 * scale;
  }

  // Trust region: one move limit per device setpoint. A limit halves when its
  // variable reverses direction, grows when it keeps pushing against it, and
  // tightens when the variable settles, which refines the fuel model there.
  Outcome run() {
    Outcome out;
    out.point = initial_point();
    settle(out.point);
    out.eval = evaluate(out.point);
    out.merits.push_back(out.eval.merit);
    constexpr double kNegligible = 1e-6;
    const double r_max = 8.0 * opt_.trust_radius;
    std::vector<double> radius(flatten(out.point).size(), opt_.trust_radius);
    // A limit never regrows past the size at which its variable last
    // overshot.
    std::vector<double> ceiling(radius.size(), r_max);
    std::vector<double> last_move(radius.size(), 0.0);
    auto widest = [&] { return radius.empty() ? 0.0 : *std::max_element(radius.begin(), radius.end()); };
    auto shrink_all = [&](double f) {
      for (std::size_t k = 0; k < radius.size(); ++k) {
        radius[k] *= f;
        ceiling[k] = std::min(ceiling[k], radius[k]);
      }
    };
    for (int it = 1; it <= opt_.max_outer; ++it) {
      out.iterations = it;
      if (widest() < opt_.slp_tol) return out;
      StepVarsList vars;
      std::vector<Elastic> elastic;
      const auto lp = build(out.point, out.eval, radius, widest(), vars, elastic);
      const auto sol = lp::solve(lp);
      if (sol.status != lp::Status::optimal) {
        if (sol.status != lp::Status::iteration_limit) {
          throw NumericalError(fmt::format("dispatch: linearized subproblem reported '{}'", lp::to_string(sol.status)));
        }
        shrink_all(0.5);
        continue;
      }
      const double predicted = model_value(lp, elastic, lp.start) - sol.objective;
      Point cand = extract(out.point, vars, sol.x);
      const auto before = flatten(out.point);
      const auto after = flatten(cand);
      double step = 0.0;
      for (std::size_t k = 0; k < before.size(); ++k) step = std::max(step, std::abs(after[k] - before[k]));
      // A predicted gain below the merit's resolution is treated as no
      // progress, so the box collapses instead of drifting along flat
      // reactive directions.
      if (step < opt_.slp_tol || predicted <= kNegligible * (1.0 + std::abs(out.eval.merit))) {
        shrink_all(0.125);
        continue;
      }
      bool settled = true;
      try {
        settle(cand);
      } catch (const DivergenceError&) {
        settled = false;
      }
      if (!settled) {
        shrink_all(0.5);
        continue;
      }
      const auto ev = evaluate(cand);
      const double actual = out.eval.merit - ev.merit;
      if (actual <= 1e-4 * predicted) {
        shrink_all(0.5);
        continue;
      }
      out.point = std::move(cand);
      out.eval = ev;
      out.merits.push_back(ev.merit);
      const bool good = actual >= 0.75 * predicted;
      for (std::size_t k = 0; k < radius.size(); ++k) {
        const double move = after[k] - before[k];
        if (move * last_move[k] < 0.0) {
          radius[k] *= 0.5;
          ceiling[k] = radius[k];
        } else if (std::abs(move) >= 0.9 * radius[k]) {
          if (good) radius[k] = std::min(2.0 * radius[k], ceiling[k]);
        } else if (std::abs(move) < 0.5 * radius[k]) {
          radius[k] = std::max(2.0 * std::abs(move), radius[k] / 8.0);
        }
        if (actual < 0.25 * predicted) radius[k] *= 0.5;
        if (move != 0.0) last_move[k] = move;
      }
    }
    if (widest() < opt_.slp_tol) return out;
    throw NumericalError(fmt::format(
        "dispatch of '{}' did not converge after {} SLP iterations (last merit {}, widest move limit {:.3g})",
        as_.name, opt_.max_outer, out.eval.merit, widest()));
  }

  DispatchSolution to_solution(const Outcome& out) const {
    DispatchSolution s;
    for (std::size_t t = 0; t < T_; ++t) {
      const auto& p = out.point[t];
      StepDispatch d;
      auto kw = [&](const std::vector<double>& v) {
        std::vector<double> r(v.size());
        std::transform(v.begin(), v.end(), r.begin(), [&](double x) { return x * base_; });
        return r;
      };
      d.dg_p = kw(p.dg_p);
      d.dg_q = kw(p.dg_q);
      d.ess_ch = kw(p.ch);
      d.ess_dis = kw(p.dis);
      d.ess_u_ch = p.uch;
      d.ess_u_dis = p.udis;
      d.ess_q = kw(p.ess_q);
      d.pv_q = kw(p.pv_q);
      d.pcc_p = p.pcc_p * base_;
      d.pcc_q = p.pcc_q * base_;
      s.steps.push_back(std::move(d));
      s.bus_states.push_back(p.state);
    }
    propagate_soc(s);
    s.slp_iterations = out.iterations;
    s.accepted_objectives = out.merits;
    s.objective = dispatch_objective(pr_, as_, s);
    return s;
  }

  void propagate_soc(DispatchSolution& s) const {
    for (std::size_t e = 0; e < as_.ess.size(); ++e) {
      double soc = soc0_[e];
      for (std::size_t t = 0; t < T_; ++t) {
        auto& d = s.steps[t];
        d.soc.resize(as_.ess.size());
        soc = soc_step(soc, d.ess_ch[e], d.ess_dis[e], as_.ess[e], pr_.dt_h);
        d.soc[e] = soc;
      }
    }
  }

 private:
  using StepVarsList = std::vector<StepVars>;

  Point initial_point() const {
    Point pt(T_);
    for (std::size_t t = 0; t < T_; ++t) {
      auto& p = pt[t];
      for (std::size_t g = 0; g < as_.dgs.size(); ++g) {
        double p0 = 0.0;
        if (on_[t][g]) {
          const auto& prev = pr_.dg_prev_kw.empty() ? std::optional<double>{} : pr_.dg_prev_kw[g];
          p0 = std::clamp(prev.value_or(0.0), 0.0, as_.dgs[g].p_max_kw) / base_;
        }
        p.dg_p.push_back(p0);
        p.dg_q.push_back(0.0);
      }
      const auto ne = as_.ess.size();
      p.ch.assign(ne, 0.0);
      p.dis.assign(ne, 0.0);
      p.uch.assign(ne, 0.0);
      p.udis.assign(ne, 0.0);
      p.ess_q.assign(ne, 0.0);
      p.pv_q.assign(as_.pvs.size(), 0.0);
    }
    return pt;
  }

  // Device setpoints in the order build() visits them.
  std::vector<double> flatten(const Point& pt) const {
    std::vector<double> x;
    for (const auto& p : pt) {
      for (std::size_t g = 0; g < p.dg_p.size(); ++g) {
        x.push_back(p.dg_p[g]);
        x.push_back(p.dg_q[g]);
      }
      for (std::size_t e = 0; e < p.ch.size(); ++e) {
        x.push_back(p.ch[e]);
        x.push_back(p.dis[e]);
        x.push_back(p.ess_q[e]);
      }
      for (double q : p.pv_q) x.push_back(q);
    }
    return x;
  }

  grid::InjectionSet injections(std::size_t t, const StepPoint& p) const {
    grid::InjectionSet inj;
    inj.p.assign(nb_, 0.0);
    inj.q.assign(nb_, 0.0);
    for (std::size_t i = 0; i < nb_; ++i) {
      inj.p[i] -= pr_.load_kw[t][i] / base_;
      inj.q[i] -= pr_.load_kvar[t][i] / base_;
    }
    for (std::size_t g = 0; g < dg_bus_.size(); ++g) {
      inj.p[dg_bus_[g]] += p.dg_p[g];
      inj.q[dg_bus_[g]] += p.dg_q[g];
    }
    for (std::size_t e = 0; e < ess_bus_.size(); ++e) {
      inj.p[ess_bus_[e]] += p.dis[e] - p.ch[e];
      inj.q[ess_bus_[e]] -= p.ess_q[e];
    }
    for (std::size_t k = 0; k < pv_bus_.size(); ++k) {
      inj.p[pv_bus_[k]] += pr_.pv_kw[t][k] / base_;
      inj.q[pv_bus_[k]] += p.pv_q[k];
    }
    return inj;
  }

  // Solves the MG power flow at every step; the PCC exchange closes the balance.
  void settle(Point& pt) const {
    for (std::size_t t = 0; t < T_; ++t) {
      auto& p = pt[t];
      const auto inj = injections(t, p);
      const auto pf = grid::solve_power_flow(as_.network, y_, inj, pr_.pcc_voltage[t], opt_.power_flow);
      p.state = pf.state;
      p.pcc_p = -(pf.slack_p - inj.p[slack_]);
      p.pcc_q = -(pf.slack_q - inj.q[slack_]);
    }
  }

  Evaluation evaluate(const Point& pt) const {
    Evaluation ev;
    auto note = [&](Family f, double v) {
      if (v <= 0.0) return;
      ev.worst[f] = std::max(ev.worst[f], v);
      ev.violation_sum += v;
    };
    const auto& net = as_.network;
    std::vector<double> soc = soc0_;
    for (std::size_t t = 0; t < T_; ++t) {
      const auto& p = pt[t];
      double cost = -pr_.retail_price[t] * p.pcc_p * base_;
      for (std::size_t g = 0; g < as_.dgs.size(); ++g) {
        if (on_[t][g]) cost += as_.dgs[g].fuel_price * fuel_cost(std::max(0.0, p.dg_p[g] * base_), as_.dgs[g]);
      }
      ev.objective += pr_.dt_h * cost;
      for (std::size_t i = 0; i < nb_; ++i) {
        if (i == slack_) continue;
        note(bus_voltage, net.buses[i].v_min - p.state.v[i]);
        note(bus_voltage, p.state.v[i] - net.buses[i].v_max);
      }
      for (std::size_t k = 0; k < net.branches.size(); ++k) {
        const auto [i, j] = br_ends_[k];
        const auto f = grid::branch_flow(net.branches[k], p.state.v[i], p.state.theta[i], p.state.v[j], p.state.theta[j]);
        note(branch_rating, std::hypot(f.p_from, f.q_from) - net.branches[k].rating);
      }
      note(pcc_active, std::abs(p.pcc_p) - as_.pcc_p_max_kw / base_);
      note(pcc_reactive, std::abs(p.pcc_q) - as_.pcc_q_max_kvar / base_);
      for (std::size_t e = 0; e < as_.ess.size(); ++e) {
        soc[e] = soc_step(soc[e], p.ch[e] * base_, p.dis[e] * base_, as_.ess[e], pr_.dt_h);
        note(soc_bounds, as_.ess[e].soc_min - soc[e]);
        note(soc_bounds, soc[e] - as_.ess[e].soc_max);
      }
      ev.soc.push_back(soc);
      for (std::size_t g = 0; g < as_.dgs.size(); ++g) {
        const double ramp = as_.dgs[g].ramp_kw / base_;
        if (t > 0) {
          note(dg_ramp, std::abs(p.dg_p[g] - pt[t - 1].dg_p[g]) - ramp);
        } else if (!pr_.dg_prev_kw.empty() && pr_.dg_prev_kw[g]) {
          note(dg_ramp, std::abs(p.dg_p[g] - *pr_.dg_prev_kw[g] / base_) - ramp);
        }
      }
    }
    ev.merit = ev.objective + penalty_ * ev.violation_sum;
    return ev;
  }

  lp::LinearProgram build(const Point& pt, const Evaluation& ev, const std::vector<double>& radius, double r,
                          StepVarsList& vars, std::vector<Elastic>& elastic) const {
    lp::LinearProgram lp;
    const auto& net = as_.network;
    std::size_t next = 0;
    auto add_box = [&](double x0, double lo, double hi) {
      const double rk = radius[next++];
      double a = std::max(lo, x0 - rk);
      double b = std::min(hi, x0 + rk);
      if (a > b) a = b = std::clamp(x0, lo, hi);
      return lp.add_variable(a, b, 0.0, std::clamp(x0, a, b));
    };
    auto add_elastic = [&](std::vector<lp::Term> terms, lp::Sense sense, double rhs) {
      const int s = lp.add_variable(0.0, lp::inf, penalty_, 0.0);
      terms.push_back({s, sense == lp::Sense::le ? -1.0 : 1.0});
      elastic.push_back({lp.add_row(std::move(terms), sense, rhs), s});
    };

    vars.assign(T_, {});
    for (std::size_t t = 0; t < T_; ++t) {
      const auto& p = pt[t];
      auto& v = vars[t];
      v.dth.assign(nb_, -1);
      v.dv.assign(nb_, -1);
      for (std::size_t i = 0; i < nb_; ++i) {
        if (i == slack_) continue;
        v.dth[i] = lp.add_variable(-r, r, 0.0, 0.0);
        v.dv[i] = lp.add_variable(-r, r, 0.0, 0.0);
      }
      for (std::size_t g = 0; g < as_.dgs.size(); ++g) {
        const auto& dg = as_.dgs[g];
        const bool on = on_[t][g];
        const double rp = radius[next];
        v.dg_p.push_back(add_box(p.dg_p[g], 0.0, on ? dg.p_max_kw / base_ : 0.0));
        v.dg_q.push_back(add_box(p.dg_q[g], 0.0, on ? dg.q_max_kvar / base_ : 0.0));
        v.f.push_back(on ? add_fuel_epigraph(lp, v.dg_p[g], p.dg_p[g], dg, rp) : -1);
      }
      for (std::size_t e = 0; e < as_.ess.size(); ++e) {
        const auto& es = as_.ess[e];
        const auto mode = modes_[e][t];
        const double ch_hi = mode == EssMode::discharge_only ? 0.0 : es.p_ch_max_kw / base_;
        const double dis_hi = mode == EssMode::charge_only ? 0.0 : es.p_dis_max_kw / base_;
        v.ch.push_back(add_box(p.ch[e], 0.0, ch_hi));
        v.dis.push_back(add_box(p.dis[e], 0.0, dis_hi));
        v.uch.push_back(lp.add_variable(0.0, ch_hi > 0.0 ? 1.0 : 0.0, 0.0, ch_hi > 0.0 ? p.uch[e] : 0.0));
        v.udis.push_back(lp.add_variable(0.0, dis_hi > 0.0 ? 1.0 : 0.0, 0.0, dis_hi > 0.0 ? p.udis[e] : 0.0));
        v.ess_q.push_back(add_box(p.ess_q[e], -es.q_max_kvar / base_, es.q_max_kvar / base_));
        v.soc.push_back(lp.add_variable(-lp::inf, lp::inf, 0.0, ev.soc[t][e]));
        lp.add_row({{v.ch[e], 1.0}, {v.uch[e], -es.p_ch_max_kw / base_}}, lp::Sense::le, 0.0);
        lp.add_row({{v.dis[e], 1.0}, {v.udis[e], -es.p_dis_max_kw / base_}}, lp::Sense::le, 0.0);
        lp.add_row({{v.uch[e], 1.0}, {v.udis[e], 1.0}}, lp::Sense::le, 1.0);
        const double kch = pr_.dt_h * es.eta_ch * base_ / es.capacity_kwh;
        const double kdis = pr_.dt_h * base_ / (es.eta_dis * es.capacity_kwh);
        std::vector<lp::Term> rec{{v.soc[e], 1.0}, {v.ch[e], -kch}, {v.dis[e], kdis}};
        double rhs = soc0_[e];
        if (t > 0) {
          rec.push_back({vars[t - 1].soc[e], -1.0});
          rhs = 0.0;
        }
        lp.add_row(std::move(rec), lp::Sense::eq, rhs);
        add_elastic({{v.soc[e], 1.0}}, lp::Sense::ge, es.soc_min);
        add_elastic({{v.soc[e], 1.0}}, lp::Sense::le, es.soc_max);
      }
      for (std::size_t k = 0; k < as_.pvs.size(); ++k) {
        const double qm = as_.pvs[k].q_max_kvar / base_;
        v.pv_q.push_back(add_box(p.pv_q[k], -qm, qm));
      }
      v.pcc_p = lp.add_variable(-lp::inf, lp::inf, -pr_.dt_h * pr_.retail_price[t] * base_, p.pcc_p);
      v.pcc_q = lp.add_variable(-lp::inf, lp::inf, 0.0, p.pcc_q);

      // Linearized nodal balances around the current power-flow solution.
      const auto jac = grid::injection_jacobian(y_, p.state);
      const auto calc = grid::computed_injections(y_, p.state);
      for (std::size_t i = 0; i < nb_; ++i) {
        std::vector<lp::Term> tp;
        std::vector<lp::Term> tq;
        for (std::size_t k = 0; k < nb_; ++k) {
          if (k == slack_) continue;
          if (jac.dp_dtheta(i, k) != 0.0) tp.push_back({v.dth[k], jac.dp_dtheta(i, k)});
          if (jac.dp_dv(i, k) != 0.0) tp.push_back({v.dv[k], jac.dp_dv(i, k)});
          if (jac.dq_dtheta(i, k) != 0.0) tq.push_back({v.dth[k], jac.dq_dtheta(i, k)});
          if (jac.dq_dv(i, k) != 0.0) tq.push_back({v.dv[k], jac.dq_dv(i, k)});
        }
        double rp = -calc.p[i] - pr_.load_kw[t][i] / base_;
        double rq = -calc.q[i] - pr_.load_kvar[t][i] / base_;
        for (std::size_t g = 0; g < dg_bus_.size(); ++g) {
          if (dg_bus_[g] != i) continue;
          tp.push_back({v.dg_p[g], -1.0});
          tq.push_back({v.dg_q[g], -1.0});
        }
        for (std::size_t e = 0; e < ess_bus_.size(); ++e) {
          if (ess_bus_[e] != i) continue;
          tp.push_back({v.ch[e], 1.0});
          tp.push_back({v.dis[e], -1.0});
          tq.push_back({v.ess_q[e], 1.0});
        }
        for (std::size_t k = 0; k < pv_bus_.size(); ++k) {
          if (pv_bus_[k] != i) continue;
          rp += pr_.pv_kw[t][k] / base_;
          tq.push_back({v.pv_q[k], -1.0});
        }
        if (i == slack_) {
          tp.push_back({v.pcc_p, 1.0});
          tq.push_back({v.pcc_q, 1.0});
        }
        lp.add_row(std::move(tp), lp::Sense::eq, rp);
        lp.add_row(std::move(tq), lp::Sense::eq, rq);
      }
      for (std::size_t i = 0; i < nb_; ++i) {
        if (i == slack_) continue;
        add_elastic({{v.dv[i], 1.0}}, lp::Sense::ge, net.buses[i].v_min - p.state.v[i]);
        add_elastic({{v.dv[i], 1.0}}, lp::Sense::le, net.buses[i].v_max - p.state.v[i]);
      }
      add_branch_facets(v, p, add_elastic);
      const double pm = as_.pcc_p_max_kw / base_;
      const double qm = as_.pcc_q_max_kvar / base_;
      add_elastic({{v.pcc_p, 1.0}}, lp::Sense::le, pm);
      add_elastic({{v.pcc_p, 1.0}}, lp::Sense::ge, -pm);
      add_elastic({{v.pcc_q, 1.0}}, lp::Sense::le, qm);
      add_elastic({{v.pcc_q, 1.0}}, lp::Sense::ge, -qm);
      for (std::size_t g = 0; g < as_.dgs.size(); ++g) {
        const double ramp = as_.dgs[g].ramp_kw / base_;
        if (t > 0) {
          add_elastic({{v.dg_p[g], 1.0}, {vars[t - 1].dg_p[g], -1.0}}, lp::Sense::le, ramp);
          add_elastic({{v.dg_p[g], 1.0}, {vars[t - 1].dg_p[g], -1.0}}, lp::Sense::ge, -ramp);
        } else if (!pr_.dg_prev_kw.empty() && pr_.dg_prev_kw[g]) {
          const double prev = *pr_.dg_prev_kw[g] / base_;
          add_elastic({{v.dg_p[g], 1.0}}, lp::Sense::le, prev + ramp);
          add_elastic({{v.dg_p[g], 1.0}}, lp::Sense::ge, prev - ramp);
        }
      }
    }
    return lp;
  }

  // Fuel epigraph f >= secants of the quadratic over the trust interval, with
  // the current output as a breakpoint so the model is exact there.
  int add_fuel_epigraph(lp::LinearProgram& lp, int p_var, double p0, const DgUnit& dg, double r) const {
    const double cost = pr_.dt_h * dg.fuel_price;
    const double lo = std::max(0.0, p0 - r) * base_;
    const double hi = std::min(dg.p_max_kw / base_, p0 + r) * base_;
    const double x0 = std::clamp(p0 * base_, lo, hi);
    const int f = lp.add_variable(-lp::inf, lp::inf, cost, fuel_cost(x0, dg));
    // The tangent at x0 keeps f bounded below even when the box is too
    // narrow for any secant.
    const double tangent = 2.0 * dg.a_f * x0 + dg.b_f;
    lp.add_row({{f, 1.0}, {p_var, -tangent * base_}}, lp::Sense::ge, fuel_cost(x0, dg) - tangent * x0);
    std::vector<double> pts;
    const int segs = std::max(2, opt_.fuel_segments);
    if (hi - lo <= 1e-9) return f;
    int left = static_cast<int>(std::lround(segs * (x0 - lo) / (hi - lo)));
    if (x0 > lo) left = std::max(left, 1);
    if (x0 < hi) left = std::min(left, segs - 1);
    const int right = segs - left;
    for (int k = 0; k < left; ++k) pts.push_back(lo + (x0 - lo) * k / left);
    for (int k = 0; k <= right; ++k) pts.push_back(x0 + (hi - x0) * k / right);
    for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
      const double a = pts[k];
      const double b = pts[k + 1];
      if (b - a <= 1e-12) continue;
      const double slope = (fuel_cost(b, dg) - fuel_cost(a, dg)) / (b - a);
      lp.add_row({{f, 1.0}, {p_var, -slope * base_}}, lp::Sense::ge, fuel_cost(a, dg) - slope * a);
    }
    return f;
  }

  template <class AddElastic>
  void add_branch_facets(const StepVars& v, const StepPoint& p, AddElastic& add_elastic) const {
    const auto& net = as_.network;
    const int facets = std::max(4, opt_.branch_facets);
    const double inset = std::cos(std::numbers::pi / facets);
    for (std::size_t k = 0; k < net.branches.size(); ++k) {
      const auto& br = net.branches[k];
      const auto [i, j] = br_ends_[k];
      const auto [g, b] = grid::series_admittance(br);
      const double vi = p.state.v[i];
      const double vj = p.state.v[j];
      const double d = p.state.theta[i] - p.state.theta[j];
      const double c = std::cos(d);
      const double s = std::sin(d);
      const double gcbs = g * c + b * s;
      const double gsbc = g * s - b * c;
      const double p0 = vi * vi * g - vi * vj * gcbs;
      const double q0 = -vi * vi * b - vi * vj * gsbc;
      // Partials of the from-end flow: {d/dvi, d/dvj, d/dthi, d/dthj}.
      const std::array<double, 4> dp{2.0 * vi * g - vj * gcbs, -vi * gcbs, vi * vj * gsbc, -vi * vj * gsbc};
      const std::array<double, 4> dq{-2.0 * vi * b - vj * gsbc, -vi * gsbc, -vi * vj * gcbs, vi * vj * gcbs};
      const std::array<int, 4> cols{v.dv[i], v.dv[j], v.dth[i], v.dth[j]};
      for (int m = 0; m < facets; ++m) {
        const double phi = 2.0 * std::numbers::pi * m / facets;
        const double cp = std::cos(phi);
        const double sp = std::sin(phi);
        std::vector<lp::Term> terms;
        for (int z = 0; z < 4; ++z) {
          const double coef = cp * dp[z] + sp * dq[z];
          if (cols[z] >= 0 && coef != 0.0) terms.push_back({cols[z], coef});
        }
        add_elastic(std::move(terms), lp::Sense::le, br.rating * inset - (cp * p0 + sp * q0));
      }
    }
  }

  double model_value(const lp::LinearProgram& lp, const std::vector<Elastic>& elastic,
                     std::vector<double> x) const {
    for (const auto& el : elastic) x[el.slack] = 0.0;
    for (const auto& el : elastic) {
      const auto& row = lp.rows[el.row];
      double a = 0.0;
      for (const auto& term : row.terms) a += term.coef * x[term.var];
      x[el.slack] = row.sense == lp::Sense::le ? std::max(0.0, a - row.rhs) : std::max(0.0, row.rhs - a);
    }
    double value = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) value += lp.cost[k] * x[k];
    return value;
  }

  Point extract(const Point& base, const StepVarsList& vars, const std::vector<double>& x) const {
    Point pt = base;
    for (std::size_t t = 0; t < T_; ++t) {
      auto& p = pt[t];
      const auto& v = vars[t];
      auto take = [&](std::vector<double>& dst, const std::vector<int>& idx) {
        for (std::size_t k = 0; k < idx.size(); ++k) dst[k] = x[idx[k]];
      };
      take(p.dg_p, v.dg_p);
      take(p.dg_q, v.dg_q);
      take(p.ch, v.ch);
      take(p.dis, v.dis);
      take(p.uch, v.uch);
      take(p.udis, v.udis);
      take(p.ess_q, v.ess_q);
      take(p.pv_q, v.pv_q);
      for (auto* vec : {&p.dg_p, &p.dg_q, &p.ch, &p.dis}) {
        for (double& z : *vec) z = std::max(0.0, z);
      }
    }
    return pt;
  }

  const DispatchProblem& pr_;
  const MgAssets& as_;
  const DispatchOptions& opt_;
  const Commitment& on_;
  const Modes& modes_;
  double base_ = 1.0;
  grid::AdmittanceMatrix y_;
  std::size_t slack_ = 0;
  std::size_t nb_ = 0;
  std::size_t T_ = 0;
  std::vector<std::size_t> dg_bus_, ess_bus_, pv_bus_;
  std::vector<std::pair<std::size_t, std::size_t>> br_ends_;
  std::vector<double> soc0_;
  double penalty_ = 1.0;
};

struct Candidate {
  DispatchSolution solution;
  double max_violation = 0.0;
  Family family = bus_voltage;
};

Candidate solve_pattern(const DispatchProblem& problem, const MgAssets& assets, const DispatchOptions& options,
                        const Commitment& on, const Modes& modes) {
  Slp slp(problem, assets, options, on, modes);
  const auto out = slp.run();
  return {slp.to_solution(out), out.eval.max_violation(), out.eval.worst_family()};
}

// Best relaxed solution over the enumerated DG on/off patterns.
DispatchSolution solve_with_modes(const DispatchProblem& problem, const MgAssets& assets,
                                  const DispatchOptions& options, const Modes& modes) {
  const std::size_t T = static_cast<std::size_t>(problem.steps);
  const std::size_t G = assets.dgs.size();
  std::vector<Commitment> patterns;
  bool greedy = false;
  const auto cap = static_cast<std::size_t>(std::max(1, options.max_commitment_patterns));
  if (G * T < 20 && (std::size_t{1} << (G * T)) <= cap) {
    for (std::size_t mask = (std::size_t{1} << (G * T)); mask-- > 0;) {
      Commitment c(T, std::vector<char>(G, 0));
      for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t g = 0; g < G; ++g) c[t][g] = (mask >> (t * G + g)) & 1u;
      }
      patterns.push_back(std::move(c));
    }
  } else {
    greedy = true;
    const std::size_t window_masks = G < 20 && (std::size_t{1} << G) <= cap ? (std::size_t{1} << G) : 1;
    for (std::size_t k = 0; k < window_masks; ++k) {
      const std::size_t mask = (window_masks == 1) ? ~std::size_t{0} : window_masks - 1 - k;
      Commitment c(T, std::vector<char>(G, 0));
      for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t g = 0; g < G; ++g) c[t][g] = (mask >> g) & 1u;
      }
      patterns.push_back(std::move(c));
    }
  }

  std::optional<DispatchSolution> best;
  Commitment best_pattern;
  std::optional<Candidate> least_bad;
  int iterations = 0;
  auto consider = [&](const Commitment& c) {
    auto cand = solve_pattern(problem, assets, options, c, modes);
    iterations += cand.solution.slp_iterations;
    if (cand.max_violation > options.feas_tol) {
      if (!least_bad || cand.max_violation < least_bad->max_violation) least_bad = std::move(cand);
      return false;
    }
    if (!best || cand.solution.objective < best->objective - 1e-12) {
      best = std::move(cand.solution);
      best_pattern = c;
      return true;
    }
    return false;
  };
  for (const auto& c : patterns) consider(c);
  if (greedy && best) {
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t g = 0; g < G; ++g) {
        if (!best_pattern[t][g]) continue;
        auto c = best_pattern;
        c[t][g] = 0;
        consider(c);
      }
    }
  }
  if (!best) {
    throw InfeasibleError(family_names[least_bad->family], least_bad->max_violation);
  }
  best->slp_iterations = iterations;
  return *best;
}

DispatchSolution repair_with_modes(DispatchSolution sol, const DispatchProblem& problem, const MgAssets& assets,
                                   const DispatchOptions& options, Modes modes) {
  const std::size_t T = static_cast<std::size_t>(problem.steps);
  const std::size_t E = assets.ess.size();
  int resolves = sol.mode_resolves;
  auto initial_soc = [&](std::size_t e) {
    return problem.soc_init.empty() ? assets.ess[e].soc_init : problem.soc_init[e];
  };
  for (std::size_t attempt = 0; attempt <= T * E + 1; ++attempt) {
    // SOC of the relaxed trajectory, recomputed rather than trusted.
    std::vector<std::vector<double>> was(E, std::vector<double>(T));
    for (std::size_t e = 0; e < E; ++e) {
      double soc = initial_soc(e);
      for (std::size_t t = 0; t < T; ++t) {
        soc = soc_step(soc, sol.steps[t].ess_ch.at(e), sol.steps[t].ess_dis.at(e), assets.ess[e], problem.dt_h);
        was[e][t] = soc;
      }
    }
    auto fixed = sol;
    for (auto& d : fixed.steps) {
      d.ess_u_ch.resize(E);
      d.ess_u_dis.resize(E);
      d.soc.resize(E);
    }
    std::vector<std::vector<char>> touched(E, std::vector<char>(T, 0));
    for (std::size_t t = 0; t < T; ++t) {
      auto& d = fixed.steps[t];
      for (std::size_t e = 0; e < E; ++e) {
        if (d.ess_ch[e] > 0.0 && d.ess_dis[e] > 0.0) {
          const double net = d.ess_ch[e] - d.ess_dis[e];
          d.ess_ch[e] = std::max(0.0, net);
          d.ess_dis[e] = std::max(0.0, -net);
          touched[e][t] = 1;
        }
        d.ess_u_ch[e] = d.ess_ch[e] > 0.0 ? 1.0 : 0.0;
        d.ess_u_dis[e] = d.ess_dis[e] > 0.0 ? 1.0 : 0.0;
      }
    }
    // Re-propagate SOC and look for a bound the repair made worse.
    bool broken = false;
    for (std::size_t e = 0; e < E && !broken; ++e) {
      const auto& es = assets.ess[e];
      double soc = initial_soc(e);
      for (std::size_t t = 0; t < T; ++t) {
        soc = soc_step(soc, fixed.steps[t].ess_ch[e], fixed.steps[t].ess_dis[e], es, problem.dt_h);
        fixed.steps[t].soc[e] = soc;
        const bool over = soc > std::max(es.soc_max, was[e][t]) + 1e-9;
        const bool under = soc < std::min(es.soc_min, was[e][t]) - 1e-9;
        if (!over && !under) continue;
        std::size_t k = t + 1;
        while (k-- > 0 && !touched[e][k]) {
        }
        const double amount = over ? soc - es.soc_max : es.soc_min - soc;
        if (k > t) throw InfeasibleError("soc_bounds", amount);
        const auto mode = over ? EssMode::discharge_only : EssMode::charge_only;
        if (modes[e][k] == mode) throw InfeasibleError("soc_bounds", amount);
        modes[e][k] = mode;
        broken = true;
        break;
      }
    }
    if (!broken) {
      fixed.mode_resolves = resolves;
      fixed.objective = dispatch_objective(problem, assets, fixed);
      return fixed;
    }
    ++resolves;
    sol = solve_with_modes(problem, assets, options, modes);
  }
  throw NumericalError("dispatch: complementarity repair did not settle");
}

Modes free_modes(const DispatchProblem& problem, const MgAssets& assets) {
  return Modes(assets.ess.size(), std::vector<EssMode>(static_cast<std::size_t>(problem.steps), EssMode::free));
}

}  // namespace

DispatchSolution solve_dispatch(const DispatchProblem& problem, const MgAssets& assets,
                                const DispatchOptions& options) {
  problem.validate(assets);
  const auto modes = free_modes(problem, assets);
  return repair_with_modes(solve_with_modes(problem, assets, options, modes), problem, assets, options, modes);
}

DispatchSolution repair_complementarity(const DispatchSolution& relaxed, const DispatchProblem& problem,
                                        const MgAssets& assets, const DispatchOptions& options) {
  problem.validate(assets);
  if (relaxed.steps.size() != static_cast<std::size_t>(problem.steps)) {
    throw ValidationError("repair_complementarity: solution length does not match the problem window");
  }
  return repair_with_modes(relaxed, problem, assets, options, free_modes(problem, assets));
}

}  // namespace gridcoop::dispatch
