#include <cmath>
#include <span>

#include <fmt/format.h>

#include "gridcoop/errors.hpp"
#include "gridcoop/kernels/kernels.hpp"
#include "gridcoop/rl.hpp"

namespace gridcoop::rl {

RlsState RlsState::initial(int dim, double phi, double mu, double delta0) {
  RlsState s;
  s.phi = phi;
  s.mu = mu;
  s.delta0 = delta0;
  s.delta = delta0 * Eigen::MatrixXd::Identity(dim, dim);
  s.validate();
  return s;
}

void RlsState::validate() const {
  if (!(phi >= 0.0 && phi < 1.0)) throw ValidationError(fmt::format("forgetting factor {} outside [0,1)", phi));
  if (!(mu >= 0.0) || !std::isfinite(mu)) throw ValidationError(fmt::format("regularization {} must be >= 0", mu));
  if (!(delta0 > 0.0) || !std::isfinite(delta0)) throw ValidationError(fmt::format("delta0 {} must be > 0", delta0));
  if (delta.rows() != delta.cols()) throw ValidationError("RLS matrix is not square");
}

namespace {

bool positive_definite(const Eigen::MatrixXd& m) {
  if (!m.allFinite()) return false;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  return es.info() == Eigen::Success && es.eigenvalues().minCoeff() > 0.0;
}

std::span<const double> view(const Eigen::VectorXd& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

}  // namespace

UpdateResult rls_update(ValueModel& model, RlsState& rls, const Eigen::VectorXd& x, double target) {
  const auto d = x.size();
  if (model.theta.size() != d || rls.delta.rows() != d || rls.delta.cols() != d) {
    throw ValidationError(fmt::format("RLS dimensions disagree: theta {}, Delta {}, x {}", model.theta.size(),
                                      rls.delta.rows(), d));
  }
  if (!x.allFinite() || !std::isfinite(target)) throw NumericalError("RLS update with non-finite data");

  UpdateResult res;
  res.prediction = kernels::dot(view(model.theta), view(x));
  res.innovation = target - res.prediction;

  const auto n = static_cast<std::size_t>(d);
  std::span<double> delta_span(rls.delta.data(), n * n);
  Eigen::VectorXd dx(d);
  // Delta is symmetric, so its column-major storage doubles as row-major.
  kernels::gemv(delta_span, n, view(x), {dx.data(), n});
  const double denom = 1.0 + kernels::dot(view(x), view(dx));
  if (!(denom > 0.0)) {
    res.reset = true;
  } else {
    kernels::rank1_update(-1.0 / denom, view(dx), view(dx), delta_span, n);
    kernels::scale(1.0 / (1.0 - rls.phi), delta_span);
    if (rls.mu > 0.0) {
      const Eigen::MatrixXd lhs = Eigen::MatrixXd::Identity(d, d) + rls.mu * rls.delta;
      rls.delta = lhs.partialPivLu().solve(rls.delta);
    }
    rls.delta = 0.5 * (rls.delta + rls.delta.transpose()).eval();
    res.reset = !positive_definite(rls.delta);
  }
  if (res.reset) {
    rls.delta = rls.delta0 * Eigen::MatrixXd::Identity(d, d);
    ++rls.resets;
  }

  kernels::gemv({rls.delta.data(), n * n}, n, view(x), {dx.data(), n});
  kernels::axpy(res.innovation, view(dx), {model.theta.data(), n});
  return res;
}

UpdateResult sgd_update(ValueModel& model, const Eigen::VectorXd& x, double target, double step) {
  if (model.theta.size() != x.size()) throw ValidationError("SGD update: feature length mismatch");
  UpdateResult res;
  res.prediction = kernels::dot(view(model.theta), view(x));
  res.innovation = target - res.prediction;
  kernels::axpy(step * res.innovation, view(x), {model.theta.data(), static_cast<std::size_t>(x.size())});
  return res;
}

}  // namespace gridcoop::rl
