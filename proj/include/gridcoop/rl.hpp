#pragma once

// Cooperative agent: sampled state, bilinear state-action value function,
// bang-bang / epsilon-greedy price selection, windowed reward and the
// regularized RLS update with exponential forgetting.
//
// States and actions are N x T matrices (row = microgrid, column = window step).

#include <Eigen/Dense>
#include <random>
#include <string>
#include <vector>

namespace gridcoop::rl {

using Rng = std::mt19937_64;

struct StateVector {
  Eigen::MatrixXd irradiance;  // normalized, [0,1]
  Eigen::MatrixXd load_kw;     // aggregate active load, >= 0

  int mgs() const noexcept { return static_cast<int>(irradiance.rows()); }
  int steps() const noexcept { return static_cast<int>(irradiance.cols()); }
  void validate() const;
};

struct ActionVector {
  Eigen::MatrixXd price;  // $/kWh

  int mgs() const noexcept { return static_cast<int>(price.rows()); }
  int steps() const noexcept { return static_cast<int>(price.cols()); }
};

struct PriceBounds {
  double lo = 0.0;
  double hi = 1.0;
  void validate() const;
};

/// Feature dimension for N microgrids: 5N + 1.
int feature_dim(int mgs) noexcept;

/// Feature layout, each block of length N summed over the window steps:
///   [ sum lambda*I | sum lambda*P | sum I | sum P | sum lambda | 1 ]
/// so theta = (theta1_1..N, theta2_1..N, ..., theta5_1..N, theta6).
Eigen::VectorXd feature_map(const StateVector& s, const ActionVector& a);

struct ValueModel {
  int mgs = 0;
  Eigen::VectorXd theta;

  static ValueModel zeros(int mgs);
};

double q_value(const ValueModel& model, const StateVector& s, const ActionVector& a);

/// Coefficient of lambda(n, t) in q_value: theta1_n*I + theta2_n*P + theta5_n.
Eigen::MatrixXd price_coefficients(const ValueModel& model, const StateVector& s);

/// Exact maximizer of q_value over the price box: hi where the coefficient is
/// positive, lo otherwise (ties go to lo).
ActionVector select_action_optimal(const ValueModel& model, const StateVector& s, const PriceBounds& bounds);

/// With probability 1 - eps the optimal action, otherwise every price drawn
/// uniformly from the bounds.
ActionVector select_action_eps_greedy(const ValueModel& model, const StateVector& s, const PriceBounds& bounds,
                                      double eps, Rng& rng, bool* explored = nullptr);

struct ErrorParams {
  double e_pv = 0.05;  // std dev of the irradiance estimate
  double e_d = 5.0;    // std dev of the load estimate, kW
};

/// Beta shape parameters of the irradiance estimate for truth `mean`.
/// Returns false when no proper Beta exists (mean at 0 or 1, or a spread too
/// wide for the mean).
bool beta_shape(double mean, double e_pv, double& alpha, double& beta);

/// Irradiance from Beta(alpha, beta) (truth returned where beta_shape fails),
/// load from N(truth, e_d^2) truncated at zero.
StateVector sample_state(const StateVector& truth, const ErrorParams& params, Rng& rng);

/// Discounted windowed revenue of the cooperative:
///   sum_t gamma^t (lambda_W[t] P_W[t] - sum_n lambda_R[n,t] P_PCC[n,t]).
double compute_reward(const std::vector<double>& wholesale_price, const std::vector<double>& p_w,
                      const Eigen::MatrixXd& retail_price, const Eigen::MatrixXd& p_pcc, double gamma);

struct RlsState {
  Eigen::MatrixXd delta;
  double phi = 0.01;    // forgetting factor
  double mu = 1e-5;     // regularization
  double delta0 = 1e3;  // initial / reset scale
  int resets = 0;

  static RlsState initial(int dim, double phi, double mu, double delta0 = 1e3);
  void validate() const;
};

struct UpdateResult {
  double prediction = 0.0;
  double innovation = 0.0;
  bool reset = false;
};

/// One training step: forgetting-scaled rank-one downdate of Delta, the mu
/// rescale, then theta += Delta x (target - theta.x). Delta is kept symmetric;
/// if it stops being positive definite it is reset to delta0 * I.
UpdateResult rls_update(ValueModel& model, RlsState& rls, const Eigen::VectorXd& x, double target);

/// Plain gradient step theta += step * (target - theta.x) x.
UpdateResult sgd_update(ValueModel& model, const Eigen::VectorXd& x, double target, double step);

// Plain-text checkpoint holding theta, Delta and the RLS hyperparameters.
struct Checkpoint {
  ValueModel model;
  RlsState rls;
};

std::string format_checkpoint(const Checkpoint& cp);
Checkpoint parse_checkpoint(const std::string& content, const std::string& origin = "<string>");
void save_checkpoint(const Checkpoint& cp, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace gridcoop::rl
