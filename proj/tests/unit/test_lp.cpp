#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <limits>
#include <random>

#include "gridcoop/lp.hpp"

using namespace gridcoop;

namespace {

// Brute-force optimum of a small bounded LP: every basic solution is the
// intersection of n active constraints taken from rows and bounds.
struct Halfspace {
  Eigen::VectorXd a;
  double b;  // a.x <= b, or a.x == b when eq
  bool eq;
};

double vertex_oracle(const lp::LinearProgram& p) {
  const int n = p.num_variables();
  std::vector<Halfspace> hs;
  for (const auto& row : p.rows) {
    Eigen::VectorXd a = Eigen::VectorXd::Zero(n);
    for (const auto& t : row.terms) a[t.var] += t.coef;
    if (row.sense == lp::Sense::ge) {
      hs.push_back({-a, -row.rhs, false});
    } else {
      hs.push_back({a, row.rhs, row.sense == lp::Sense::eq});
    }
  }
  for (int j = 0; j < n; ++j) {
    Eigen::VectorXd e = Eigen::VectorXd::Unit(n, j);
    hs.push_back({e, p.upper[j], false});
    hs.push_back({-e, -p.lower[j], false});
  }
  const int m = static_cast<int>(hs.size());
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> pick(n);
  // Enumerate all n-subsets of the constraints.
  std::function<void(int, int)> rec = [&](int start, int depth) {
    if (depth == n) {
      Eigen::MatrixXd a(n, n);
      Eigen::VectorXd b(n);
      for (int k = 0; k < n; ++k) {
        a.row(k) = hs[pick[k]].a.transpose();
        b[k] = hs[pick[k]].b;
      }
      Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
      if (lu.rank() < n) return;
      const Eigen::VectorXd x = lu.solve(b);
      for (const auto& h : hs) {
        const double ax = h.a.dot(x);
        if (ax > h.b + 1e-9) return;
        if (h.eq && ax < h.b - 1e-9) return;
      }
      double obj = 0.0;
      for (int j = 0; j < n; ++j) obj += p.cost[j] * x[j];
      best = std::min(best, obj);
      return;
    }
    for (int k = start; k < m; ++k) {
      pick[depth] = k;
      rec(k + 1, depth + 1);
    }
  };
  rec(0, 0);
  return best;
}

}  // namespace

TEST_CASE("textbook LP") {
  // max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18
  lp::LinearProgram p;
  const int x = p.add_variable(0.0, lp::inf, -3.0);
  const int y = p.add_variable(0.0, lp::inf, -5.0);
  p.add_row({{x, 1.0}}, lp::Sense::le, 4.0);
  p.add_row({{y, 2.0}}, lp::Sense::le, 12.0);
  p.add_row({{x, 3.0}, {y, 2.0}}, lp::Sense::le, 18.0);
  const auto s = lp::solve(p);
  REQUIRE(s.status == lp::Status::optimal);
  CHECK(s.x[x] == doctest::Approx(2.0));
  CHECK(s.x[y] == doctest::Approx(6.0));
  CHECK(s.objective == doctest::Approx(-36.0));
}

TEST_CASE("equality and ge rows, free variables") {
  lp::LinearProgram p;
  const int x = p.add_variable(-lp::inf, lp::inf, 1.0);
  const int y = p.add_variable(-lp::inf, lp::inf, 2.0);
  p.add_row({{x, 1.0}, {y, 1.0}}, lp::Sense::eq, 3.0);
  p.add_row({{x, 1.0}, {y, -1.0}}, lp::Sense::le, 1.0);
  p.add_row({{y, 1.0}}, lp::Sense::ge, 0.5);
  const auto s = lp::solve(p);
  REQUIRE(s.status == lp::Status::optimal);
  CHECK(s.x[x] == doctest::Approx(2.0));
  CHECK(s.x[y] == doctest::Approx(1.0));
}

TEST_CASE("infeasible and unbounded programs are reported") {
  lp::LinearProgram a;
  const int x = a.add_variable(0.0, 1.0, 1.0);
  a.add_row({{x, 1.0}}, lp::Sense::ge, 2.0);
  CHECK(lp::solve(a).status == lp::Status::infeasible);

  lp::LinearProgram b;
  const int y = b.add_variable(0.0, lp::inf, -1.0);
  const int z = b.add_variable(0.0, lp::inf, 0.0);
  b.add_row({{y, 1.0}, {z, -1.0}}, lp::Sense::le, 1.0);
  CHECK(lp::solve(b).status == lp::Status::unbounded);

  CHECK_THROWS(b.add_variable(1.0, 0.0, 0.0));
  CHECK_THROWS(b.add_row({{7, 1.0}}, lp::Sense::le, 0.0));
}

TEST_CASE("zero-cost variables keep their start value") {
  lp::LinearProgram p;
  const int x = p.add_variable(-5.0, 5.0, 1.0, 2.0);
  const int w = p.add_variable(-lp::inf, lp::inf, 0.0, 0.75);
  p.add_row({{x, 1.0}}, lp::Sense::ge, -1.0);
  const auto s = lp::solve(p);
  REQUIRE(s.status == lp::Status::optimal);
  CHECK(s.x[x] == doctest::Approx(-1.0));
  CHECK(s.x[w] == 0.75);
}

TEST_CASE("degenerate program terminates") {
  // Many constraints active at the optimum vertex.
  lp::LinearProgram p;
  const int x = p.add_variable(0.0, lp::inf, -1.0);
  const int y = p.add_variable(0.0, lp::inf, -1.0);
  for (int k = 1; k <= 20; ++k) p.add_row({{x, 1.0 * k}, {y, 1.0 * k}}, lp::Sense::le, 2.0 * k);
  p.add_row({{x, 1.0}}, lp::Sense::le, 1.0);
  p.add_row({{y, 1.0}}, lp::Sense::le, 1.0);
  const auto s = lp::solve(p);
  REQUIRE(s.status == lp::Status::optimal);
  CHECK(s.objective == doctest::Approx(-2.0));
}

TEST_CASE("random bounded programs match vertex enumeration") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<int> nvar(2, 4);
  std::uniform_int_distribution<int> nrow(1, 5);
  std::uniform_int_distribution<int> sense(0, 5);
  int solved = 0;
  for (int trial = 0; trial < 300; ++trial) {
    lp::LinearProgram p;
    const int n = nvar(rng);
    for (int j = 0; j < n; ++j) {
      const double lo = -1.0 - std::abs(u(rng));
      p.add_variable(lo, lo + 0.5 + 2.0 * std::abs(u(rng)), u(rng), u(rng));
    }
    const int m = nrow(rng);
    for (int k = 0; k < m; ++k) {
      std::vector<lp::Term> terms;
      for (int j = 0; j < n; ++j) terms.push_back({j, u(rng)});
      const int s = sense(rng);
      const auto sn = s == 0 ? lp::Sense::eq : (s < 3 ? lp::Sense::le : lp::Sense::ge);
      p.add_row(std::move(terms), sn, 0.5 * u(rng));
    }
    const double oracle = vertex_oracle(p);
    const auto s = lp::solve(p);
    CAPTURE(trial);
    if (std::isinf(oracle)) {
      CHECK(s.status == lp::Status::infeasible);
      continue;
    }
    REQUIRE(s.status == lp::Status::optimal);
    CHECK(s.objective == doctest::Approx(oracle).epsilon(1e-7).scale(1.0));
    ++solved;
  }
  CHECK(solved > 100);
}
