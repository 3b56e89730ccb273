#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "gridcoop/errors.hpp"
#include "gridcoop/rl.hpp"

namespace gridcoop::rl {

void StateVector::validate() const {
  if (irradiance.rows() != load_kw.rows() || irradiance.cols() != load_kw.cols()) {
    throw ValidationError("state: irradiance and load shapes differ");
  }
  for (Eigen::Index i = 0; i < irradiance.size(); ++i) {
    const double v = irradiance.data()[i];
    if (!(v >= 0.0 && v <= 1.0)) throw ValidationError(fmt::format("state: irradiance {} outside [0,1]", v));
    if (!(load_kw.data()[i] >= 0.0)) throw ValidationError(fmt::format("state: negative load {}", load_kw.data()[i]));
  }
}

void PriceBounds::validate() const {
  if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi)) {
    throw ValidationError(fmt::format("price bounds need lo < hi, got [{}, {}]", lo, hi));
  }
}

int feature_dim(int mgs) noexcept { return 5 * mgs + 1; }

ValueModel ValueModel::zeros(int mgs) {
  if (mgs < 1) throw ValidationError("value model needs at least one microgrid");
  return {mgs, Eigen::VectorXd::Zero(feature_dim(mgs))};
}

namespace {

void check_shapes(const StateVector& s, const ActionVector& a) {
  if (s.irradiance.rows() != a.price.rows() || s.irradiance.cols() != a.price.cols() ||
      s.load_kw.rows() != a.price.rows() || s.load_kw.cols() != a.price.cols()) {
    throw ValidationError(fmt::format("state is {}x{} but action is {}x{}", s.irradiance.rows(), s.irradiance.cols(),
                                      a.price.rows(), a.price.cols()));
  }
}

void check_model(const ValueModel& model, int mgs) {
  if (model.mgs != mgs || model.theta.size() != feature_dim(mgs)) {
    throw ValidationError(fmt::format("value model built for {} microgrids, state has {}", model.mgs, mgs));
  }
}

}  // namespace

Eigen::VectorXd feature_map(const StateVector& s, const ActionVector& a) {
  check_shapes(s, a);
  const int n = s.mgs();
  Eigen::VectorXd x = Eigen::VectorXd::Zero(feature_dim(n));
  for (int i = 0; i < n; ++i) {
    const auto lam = a.price.row(i).array();
    const auto irr = s.irradiance.row(i).array();
    const auto load = s.load_kw.row(i).array();
    x[i] = (lam * irr).sum();
    x[n + i] = (lam * load).sum();
    x[2 * n + i] = irr.sum();
    x[3 * n + i] = load.sum();
    x[4 * n + i] = lam.sum();
  }
  x[5 * n] = 1.0;
  return x;
}

double q_value(const ValueModel& model, const StateVector& s, const ActionVector& a) {
  check_model(model, s.mgs());
  return model.theta.dot(feature_map(s, a));
}

Eigen::MatrixXd price_coefficients(const ValueModel& model, const StateVector& s) {
  check_model(model, s.mgs());
  const int n = s.mgs();
  Eigen::MatrixXd c(n, s.steps());
  for (int i = 0; i < n; ++i) {
    c.row(i) = model.theta[i] * s.irradiance.row(i).array() + model.theta[n + i] * s.load_kw.row(i).array() +
               model.theta[4 * n + i];
  }
  return c;
}

ActionVector select_action_optimal(const ValueModel& model, const StateVector& s, const PriceBounds& bounds) {
  bounds.validate();
  const Eigen::MatrixXd c = price_coefficients(model, s);
  ActionVector a{c.unaryExpr([&](double v) { return v > 0.0 ? bounds.hi : bounds.lo; })};
  return a;
}

ActionVector select_action_eps_greedy(const ValueModel& model, const StateVector& s, const PriceBounds& bounds,
                                      double eps, Rng& rng, bool* explored) {
  if (!(eps >= 0.0 && eps <= 1.0)) throw ValidationError(fmt::format("epsilon {} outside [0,1]", eps));
  bounds.validate();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double r = unit(rng);
  if (explored) *explored = r < eps;
  if (r >= eps) return select_action_optimal(model, s, bounds);
  std::uniform_real_distribution<double> price(bounds.lo, bounds.hi);
  ActionVector a{Eigen::MatrixXd(s.mgs(), s.steps())};
  // Column-major fill order, fixed so runs are reproducible.
  for (Eigen::Index k = 0; k < a.price.size(); ++k) a.price.data()[k] = price(rng);
  return a;
}

bool beta_shape(double mean, double e_pv, double& alpha, double& beta) {
  if (!(mean > 0.0 && mean < 1.0) || !(e_pv > 0.0)) return false;
  beta = (1.0 - mean) * (mean * (1.0 + mean) / (e_pv * e_pv) - 1.0);
  alpha = beta * mean / (1.0 - mean);
  return std::isfinite(alpha) && std::isfinite(beta) && alpha > 0.0 && beta > 0.0;
}

StateVector sample_state(const StateVector& truth, const ErrorParams& params, Rng& rng) {
  truth.validate();
  if (!(params.e_pv > 0.0) || !(params.e_d > 0.0)) {
    throw ValidationError("estimation error spreads must be positive");
  }
  StateVector out = truth;
  for (Eigen::Index k = 0; k < truth.irradiance.size(); ++k) {
    double a = 0.0;
    double b = 0.0;
    if (beta_shape(truth.irradiance.data()[k], params.e_pv, a, b)) {
      std::gamma_distribution<double> ga(a, 1.0);
      std::gamma_distribution<double> gb(b, 1.0);
      const double x = ga(rng);
      const double y = gb(rng);
      out.irradiance.data()[k] = x + y > 0.0 ? x / (x + y) : truth.irradiance.data()[k];
    }
  }
  for (Eigen::Index k = 0; k < truth.load_kw.size(); ++k) {
    std::normal_distribution<double> nd(truth.load_kw.data()[k], params.e_d);
    double v = -1.0;
    for (int tries = 0; tries < 64 && v < 0.0; ++tries) v = nd(rng);
    out.load_kw.data()[k] = std::max(v, 0.0);
  }
  return out;
}

double compute_reward(const std::vector<double>& wholesale_price, const std::vector<double>& p_w,
                      const Eigen::MatrixXd& retail_price, const Eigen::MatrixXd& p_pcc, double gamma) {
  const auto T = static_cast<Eigen::Index>(wholesale_price.size());
  if (static_cast<Eigen::Index>(p_w.size()) != T || retail_price.cols() != T || p_pcc.cols() != T ||
      retail_price.rows() != p_pcc.rows()) {
    throw ValidationError("reward: series lengths do not match");
  }
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ValidationError(fmt::format("discount {} outside [0,1]", gamma));
  double total = 0.0;
  double weight = 1.0;
  for (Eigen::Index t = 0; t < T; ++t) {
    double pi = wholesale_price[t] * p_w[t];
    for (Eigen::Index n = 0; n < p_pcc.rows(); ++n) pi -= retail_price(n, t) * p_pcc(n, t);
    total += weight * pi;
    weight *= gamma;
  }
  return total;
}

}  // namespace gridcoop::rl
