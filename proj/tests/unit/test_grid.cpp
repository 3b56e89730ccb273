#include <doctest.h>

#include <cmath>
#include <complex>
#include <numeric>

#include "gridcoop/errors.hpp"
#include "gridcoop/grid.hpp"
#include "oracles.hpp"

using namespace gridcoop;
using cd = std::complex<double>;

namespace {

const std::string feeder_path = oracle::data("feeder33.net");
using oracle::sweep;
using oracle::two_bus;

}  // namespace

TEST_CASE("two-bus feeder matches the closed-form receiving-end voltage") {
  const double r = 0.02;
  const double x = 0.04;
  const double p = 0.8;
  const double q = 0.3;
  const auto net = two_bus(r, x);
  grid::InjectionSet inj{{0.0, -p}, {0.0, -q}};
  const double v1 = 1.02;
  const auto res = grid::solve_power_flow(net, inj, v1);
  const double v2 = oracle::two_bus_voltage(r, x, p, q, v1);
  CHECK(std::abs(res.state.v[1] - v2) < 1e-8);
  CHECK(res.state.v[0] == v1);
  const double loss = (r) * (p * p + q * q) / (v2 * v2);
  CHECK(std::abs(res.slack_p - (p + loss)) < 1e-8);
  CHECK(res.max_mismatch < 1e-8);
}

TEST_CASE("33-bus feeder agrees with a backward/forward sweep") {
  const auto net = grid::load_network(feeder_path);
  CHECK(net.size() == 33);
  CHECK(net.branches.size() == 32);
  for (double scale : {0.5, 1.0, 1.3}) {
    CAPTURE(scale);
    const auto inj = grid::background_injections(net, scale);
    const auto res = grid::solve_power_flow(net, inj, 1.0);
    const auto ref = sweep(net, inj, 1.0);
    double worst = 0.0;
    for (std::size_t i = 0; i < net.size(); ++i) {
      worst = std::max(worst, std::abs(res.state.v[i] - std::abs(ref[i])));
      worst = std::max(worst, std::abs(res.state.theta[i] - std::arg(ref[i])));
    }
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("33-bus base case reproduces the well-known losses and minimum voltage") {
  const auto net = grid::load_network(feeder_path);
  const auto res = grid::solve_power_flow(net, grid::background_injections(net), 1.0);
  const double loss_kw = grid::total_losses(grid::line_flows(net, res.state)) * net.base_kva;
  CHECK(loss_kw == doctest::Approx(202.7).epsilon(0.005));
  const auto vmin = *std::min_element(res.state.v.begin(), res.state.v.end());
  CHECK(vmin == doctest::Approx(0.9131).epsilon(0.001));
  // Energy accounting: substation supplies loads plus losses.
  CHECK(res.slack_p * net.base_kva == doctest::Approx(3715.0 + loss_kw).epsilon(1e-7));
}

TEST_CASE("unloaded network stays flat") {
  const auto net = grid::load_network(feeder_path);
  grid::InjectionSet inj{std::vector<double>(net.size(), 0.0), std::vector<double>(net.size(), 0.0)};
  const auto res = grid::solve_power_flow(net, inj, 1.0);
  for (std::size_t i = 0; i < net.size(); ++i) {
    CHECK(std::abs(res.state.v[i] - 1.0) < 1e-12);
    CHECK(std::abs(res.state.theta[i]) < 1e-12);
  }
  for (const auto& f : grid::line_flows(net, res.state)) {
    CHECK(std::abs(f.p_from) < 1e-12);
    CHECK(std::abs(f.q_from) < 1e-12);
  }
}

TEST_CASE("single-bus network returns the slack injection directly") {
  const auto net = grid::single_bus_network("mg", 500.0);
  grid::InjectionSet inj{{0.3}, {-0.1}};
  const auto res = grid::solve_power_flow(net, inj, 1.01);
  CHECK(res.slack_p == doctest::Approx(0.0));
  CHECK(res.state.v[0] == 1.01);
}

TEST_CASE("overloaded feeder fails with a divergence error") {
  const auto net = two_bus(0.05, 0.1);
  grid::InjectionSet inj{{0.0, -20.0}, {0.0, -10.0}};
  CHECK_THROWS_AS(grid::solve_power_flow(net, inj, 1.0), DivergenceError);
  CHECK_THROWS_AS(grid::solve_power_flow(net, inj, 2.0), ValidationError);
}

TEST_CASE("branch flows are consistent with bus injections") {
  const auto net = grid::load_network(feeder_path);
  const auto inj = grid::background_injections(net, 0.8);
  const auto res = grid::solve_power_flow(net, inj, 1.0);
  const auto flows = grid::line_flows(net, res.state);
  std::vector<double> out_p(net.size(), 0.0);
  std::vector<double> out_q(net.size(), 0.0);
  for (std::size_t k = 0; k < net.branches.size(); ++k) {
    const auto i = net.index_of(net.branches[k].from);
    const auto j = net.index_of(net.branches[k].to);
    out_p[i] += flows[k].p_from;
    out_q[i] += flows[k].q_from;
    out_p[j] += flows[k].p_to;
    out_q[j] += flows[k].q_to;
    CHECK(flows[k].loss_p() >= 0.0);
  }
  const auto calc = grid::computed_injections(grid::build_admittance(net), res.state);
  for (std::size_t i = 0; i < net.size(); ++i) {
    CHECK(out_p[i] == doctest::Approx(calc.p[i]).epsilon(1e-10).scale(1.0));
    CHECK(out_q[i] == doctest::Approx(calc.q[i]).epsilon(1e-10).scale(1.0));
  }
}

TEST_CASE("injection Jacobian matches finite differences") {
  const auto net = grid::load_network(feeder_path);
  const auto y = grid::build_admittance(net);
  const auto res = grid::solve_power_flow(net, grid::background_injections(net), 1.0);
  const auto jac = grid::injection_jacobian(y, res.state);
  const double h = 1e-7;
  for (std::size_t k : {0u, 5u, 17u, 32u}) {
    auto sp = res.state;
    auto sm = res.state;
    sp.theta[k] += h;
    sm.theta[k] -= h;
    const auto ip = grid::computed_injections(y, sp);
    const auto im = grid::computed_injections(y, sm);
    auto vp = res.state;
    auto vm = res.state;
    vp.v[k] += h;
    vm.v[k] -= h;
    const auto jp = grid::computed_injections(y, vp);
    const auto jm = grid::computed_injections(y, vm);
    for (std::size_t i = 0; i < net.size(); ++i) {
      CHECK(jac.dp_dtheta(i, k) == doctest::Approx((ip.p[i] - im.p[i]) / (2 * h)).epsilon(1e-5).scale(1.0));
      CHECK(jac.dq_dtheta(i, k) == doctest::Approx((ip.q[i] - im.q[i]) / (2 * h)).epsilon(1e-5).scale(1.0));
      CHECK(jac.dp_dv(i, k) == doctest::Approx((jp.p[i] - jm.p[i]) / (2 * h)).epsilon(1e-5).scale(1.0));
      CHECK(jac.dq_dv(i, k) == doctest::Approx((jp.q[i] - jm.q[i]) / (2 * h)).epsilon(1e-5).scale(1.0));
    }
  }
}

TEST_CASE("network file round-trips and rejects bad topologies") {
  const auto net = grid::load_network(feeder_path);
  const auto again = grid::parse_network(grid::format_network(net), "roundtrip");
  REQUIRE(again.size() == net.size());
  REQUIRE(again.branches.size() == net.branches.size());
  for (std::size_t i = 0; i < net.size(); ++i) {
    CHECK(again.buses[i].id == net.buses[i].id);
    CHECK(again.buses[i].load_kw == net.buses[i].load_kw);
    CHECK(again.buses[i].v_min == net.buses[i].v_min);
  }
  for (std::size_t k = 0; k < net.branches.size(); ++k) {
    CHECK(again.branches[k].r == net.branches[k].r);
    CHECK(again.branches[k].x == net.branches[k].x);
  }

  const std::string head = "schema_version = 1\nbase_kva = 100\nbase_kv = 1\n";
  CHECK_THROWS_WITH_AS(grid::parse_network(head + "[buses]\n1 slack 0.9 1.1\n2 pq 0.9 1.1\n3 pq 0.9 1.1\n"
                                                  "[branches]\n1 2 0.01 0.01 1\n"),
                       doctest::Contains("disconnected"), ValidationError);
  CHECK_THROWS_AS(grid::parse_network(head + "[buses]\n1 slack 0.9 1.1\n2 slack 0.9 1.1\n"
                                             "[branches]\n1 2 0.01 0.01 1\n"),
                  ValidationError);
  CHECK_THROWS_AS(grid::parse_network(head + "[buses]\n1 slack 0.9 1.1\n2 pq 0.9 1.1\n"
                                             "[branches]\n1 2 0 0 1\n"),
                  ValidationError);
  CHECK_THROWS_WITH_AS(grid::parse_network(head + "[buses]\n1 slack 0.9\n", "bad.net"),
                       doctest::Contains("bad.net:5"), ValidationError);
  CHECK_THROWS_AS(grid::parse_network("schema_version = 2\nbase_kva = 1\nbase_kv = 1\n"), ValidationError);
}
