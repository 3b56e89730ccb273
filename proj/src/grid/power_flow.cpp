#include <cmath>

#include <fmt/format.h>

#include "gridcoop/errors.hpp"
#include "gridcoop/grid.hpp"

namespace gridcoop::grid {

InjectionSet computed_injections(const AdmittanceMatrix& y, const BusState& state) {
  const auto n = state.v.size();
  InjectionSet out{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
  for (std::size_t i = 0; i < n; ++i) {
    double p = 0.0;
    double q = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double gij = y.g(i, j);
      const double bij = y.b(i, j);
      if (gij == 0.0 && bij == 0.0) continue;
      const double t = state.theta[i] - state.theta[j];
      const double c = std::cos(t);
      const double s = std::sin(t);
      p += state.v[j] * (gij * c + bij * s);
      q += state.v[j] * (gij * s - bij * c);
    }
    out.p[i] = state.v[i] * p;
    out.q[i] = state.v[i] * q;
  }
  return out;
}

InjectionJacobian injection_jacobian(const AdmittanceMatrix& y, const BusState& state) {
  const auto n = static_cast<Eigen::Index>(state.v.size());
  InjectionJacobian jac{Eigen::MatrixXd::Zero(n, n), Eigen::MatrixXd::Zero(n, n), Eigen::MatrixXd::Zero(n, n),
                        Eigen::MatrixXd::Zero(n, n)};
  const auto inj = computed_injections(y, state);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double vi = state.v[i];
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      const double gij = y.g(i, j);
      const double bij = y.b(i, j);
      if (gij == 0.0 && bij == 0.0) continue;
      const double t = state.theta[i] - state.theta[j];
      const double c = std::cos(t);
      const double s = std::sin(t);
      const double vj = state.v[j];
      jac.dp_dtheta(i, j) = vi * vj * (gij * s - bij * c);
      jac.dp_dv(i, j) = vi * (gij * c + bij * s);
      jac.dq_dtheta(i, j) = -vi * vj * (gij * c + bij * s);
      jac.dq_dv(i, j) = vi * (gij * s - bij * c);
    }
    const double gii = y.g(i, i);
    const double bii = y.b(i, i);
    jac.dp_dtheta(i, i) = -inj.q[i] - bii * vi * vi;
    jac.dp_dv(i, i) = inj.p[i] / vi + gii * vi;
    jac.dq_dtheta(i, i) = inj.p[i] - gii * vi * vi;
    jac.dq_dv(i, i) = inj.q[i] / vi - bii * vi;
  }
  return jac;
}

PowerFlowResult solve_power_flow(const NetworkModel& network, const InjectionSet& injections,
                                 double slack_voltage, const PowerFlowOptions& options) {
  return solve_power_flow(network, build_admittance(network), injections, slack_voltage, options);
}

PowerFlowResult solve_power_flow(const NetworkModel& network, const AdmittanceMatrix& y,
                                 const InjectionSet& injections, double slack_voltage,
                                 const PowerFlowOptions& options) {
  const auto n = network.size();
  if (injections.p.size() != n || injections.q.size() != n) {
    throw ValidationError(fmt::format("power flow: injection dimension {} does not match {} buses",
                                      injections.p.size(), n));
  }
  if (!(slack_voltage >= 0.5 && slack_voltage <= 1.5)) {
    throw ValidationError(fmt::format("power flow: slack voltage {} outside [0.5, 1.5] pu", slack_voltage));
  }
  const auto slack = network.slack_index();
  std::vector<std::size_t> pq;
  pq.reserve(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    if (i != slack) pq.push_back(i);
  }
  const auto m = static_cast<Eigen::Index>(pq.size());

  PowerFlowResult result;
  result.state.v.assign(n, 1.0);
  result.state.theta.assign(n, 0.0);
  result.state.v[slack] = slack_voltage;

  Eigen::VectorXd mismatch(2 * m);
  Eigen::MatrixXd jac(2 * m, 2 * m);
  for (int iter = 0;; ++iter) {
    const auto calc = computed_injections(y, result.state);
    double worst = 0.0;
    for (Eigen::Index k = 0; k < m; ++k) {
      const auto i = pq[k];
      mismatch(k) = injections.p[i] - calc.p[i];
      mismatch(m + k) = injections.q[i] - calc.q[i];
      worst = std::max({worst, std::abs(mismatch(k)), std::abs(mismatch(m + k))});
    }
    result.iterations = iter;
    result.max_mismatch = worst;
    if (!std::isfinite(worst)) {
      throw DivergenceError("power flow diverged (non-finite mismatch)", worst, iter);
    }
    if (worst <= options.tolerance) {
      result.slack_p = calc.p[slack];
      result.slack_q = calc.q[slack];
      return result;
    }
    if (iter >= options.max_iterations) {
      throw DivergenceError(fmt::format("power flow did not converge in {} iterations (max mismatch {:.3e} pu)",
                                        options.max_iterations, worst),
                            worst, iter);
    }
    const auto full = injection_jacobian(y, result.state);
    for (Eigen::Index r = 0; r < m; ++r) {
      for (Eigen::Index c = 0; c < m; ++c) {
        const auto i = static_cast<Eigen::Index>(pq[r]);
        const auto j = static_cast<Eigen::Index>(pq[c]);
        jac(r, c) = full.dp_dtheta(i, j);
        jac(r, m + c) = full.dp_dv(i, j);
        jac(m + r, c) = full.dq_dtheta(i, j);
        jac(m + r, m + c) = full.dq_dv(i, j);
      }
    }
    const Eigen::VectorXd step = jac.partialPivLu().solve(mismatch);
    for (Eigen::Index k = 0; k < m; ++k) {
      result.state.theta[pq[k]] += step(k);
      result.state.v[pq[k]] += step(m + k);
    }
  }
}

}  // namespace gridcoop::grid
