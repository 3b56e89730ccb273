#pragma once

// Bi-level loop: the agent prices each PCC, every microgrid dispatches, the
// feeder power flow settles PCC voltages (fixed-point exchange), the window
// reward trains the value model. Also the brute-force welfare oracle.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gridcoop/dispatch.hpp"
#include "gridcoop/grid.hpp"
#include "gridcoop/rl.hpp"
#include "gridcoop/scenario.hpp"

namespace gridcoop::coord {

struct MgSite {
  dispatch::MgAssets assets;
  int feeder_bus = 0;
};

/// Host feeder plus the microgrids hanging off it. The feeder carries only
/// the PCC exchanges; its own background loads are not part of the exchange.
struct System {
  grid::NetworkModel feeder;
  std::vector<MgSite> sites;

  int mgs() const noexcept { return static_cast<int>(sites.size()); }
  void validate() const;
};

System build_system(const scenario::ExperimentConfig& config);

/// Applies `<mg|*>.<dg|ess|pv>.<field>` or `<mg|*>.<pcc_p_max_kw|pcc_q_max_kvar>`.
void apply_override(System& system, const scenario::OverrideEvent& event);

/// Truth over one decision window (rows = microgrids, columns = steps).
struct WindowData {
  Eigen::MatrixXd load_kw;
  Eigen::MatrixXd irradiance;
  std::vector<double> wholesale_price;
  double dt_h = 1.0;

  int steps() const noexcept { return static_cast<int>(wholesale_price.size()); }
};

/// Window of `steps` starting at `start`, wrapping around the profile end.
WindowData window_data(const scenario::ScenarioProfile& profile, int start, int steps);

/// Storage and generator status a microgrid enters the window with.
struct MgStartState {
  std::vector<double> soc;                       // per ESS; empty -> asset default
  std::vector<std::optional<double>> dg_prev_kw; // per DG; empty -> unconstrained
};

struct ExchangeConfig {
  double v_threshold = 1e-4;
  int max_iterations = 20;
  double slack_voltage = 1.0;
  dispatch::DispatchOptions dispatch{};
  grid::PowerFlowOptions power_flow{};
  bool parallel = true;
};

struct ExchangeInputs {
  WindowData truth;
  // What the microgrids plan with; empty -> the truth.
  Eigen::MatrixXd load_estimate;
  Eigen::MatrixXd irradiance_estimate;
  std::vector<MgStartState> start;  // empty -> defaults
  Eigen::MatrixXd v_pcc_initial;     // empty -> 1.0 pu everywhere
};

struct ExchangeResult {
  std::vector<dispatch::DispatchProblem> problems;
  std::vector<dispatch::DispatchSolution> dispatch;
  // Realized exchange: the plan plus the forecast error, which the PCC absorbs.
  Eigen::MatrixXd pcc_kw;
  Eigen::MatrixXd pcc_kvar;
  Eigen::MatrixXd v_pcc;
  Eigen::MatrixXd fuel_usd;  // per MG and step, idle convention
  std::vector<grid::BusState> feeder_states;
  std::vector<double> p_w_kw;    // substation export to the wholesale market
  std::vector<double> losses_kw;
  int iterations = 0;
  std::vector<std::vector<double>> trajectory;  // PCC voltages per iteration (mg-major)
};

ExchangeResult fixed_point_exchange(const rl::ActionVector& action, const System& system,
                                    const ExchangeInputs& inputs, const ExchangeConfig& config);

/// Cooperative revenue (undiscounted) minus every microgrid's operating
/// cost over the window, $. Retail payments cancel, leaving wholesale
/// revenue minus fuel.
double welfare(const ExchangeResult& result, const WindowData& truth, const rl::ActionVector& action);

/// Per-MG operating cost over the window, $ (the dispatch objective on the
/// realized exchange).
std::vector<double> mg_costs(const ExchangeResult& result, const WindowData& truth, const rl::ActionVector& action);

struct AgentConfig {
  double gamma = 0.99;
  double delta = 0.01;
  double mu = 1e-5;
  double phi = 0.01;
  double epsilon = 0.1;
  double delta0 = 1e3;
  rl::PriceBounds bounds{0.1, 0.5};
  rl::ErrorParams errors{};
  std::string training_rule = "rls";
  double estimate_sigma = 0.02;  // relative error of the microgrids' own forecasts
};

struct EpisodeRecord {
  int episode = 0;
  int window_start = 0;
  rl::StateVector state;
  rl::ActionVector action;
  bool explored = false;
  Eigen::MatrixXd pcc_kw;
  std::vector<double> p_w_kw;
  std::vector<double> wholesale_price;
  double reward = 0.0;
  double q_hat = 0.0;
  double innovation = 0.0;
  double ape = 0.0;
  double welfare = 0.0;
  double theta_change = 0.0;  // infinity norm
  int exchange_iterations = 0;
  bool rls_reset = false;
};

/// |R - Q| / max(|R|, 1e-6)
double absolute_percentage_error(double reward, double prediction) noexcept;

/// Sample state, pick an epsilon-greedy action, run the exchange, score the
/// reward and train. `exchange_out` receives the exchange when given.
EpisodeRecord run_episode(rl::ValueModel& model, rl::RlsState& rls, const System& system, const WindowData& truth,
                          const std::vector<MgStartState>& start, const AgentConfig& agent,
                          const ExchangeConfig& exchange, rl::Rng& rng, ExchangeResult* exchange_out = nullptr);

struct TrainingConfig {
  AgentConfig agent{};
  ExchangeConfig exchange{};
  int window = 4;
  int episodes = 500;
  double theta_threshold = 1e-4;
  int start_step = 0;
  bool fixed_window = false;  // every episode replays the window at start_step
  std::vector<scenario::OverrideEvent> overrides;
  std::uint64_t seed = 1;
};

TrainingConfig training_config(const scenario::ExperimentConfig& config);

struct TrainingLog {
  std::vector<EpisodeRecord> episodes;
  rl::ValueModel model;
  rl::RlsState rls;
  bool converged = false;  // stopped on the parameter-change threshold
};

TrainingLog run_training(System system, const scenario::ScenarioProfile& profile, const TrainingConfig& config,
                         const std::optional<rl::Checkpoint>& warm_start = std::nullopt,
                         const std::function<void(const EpisodeRecord&)>& on_episode = {});

scenario::LogRow log_row(const EpisodeRecord& record);

/// Expected state of a window: the truth itself (no estimation noise).
rl::StateVector truth_state(const WindowData& truth);

struct Evaluation {
  double welfare = 0.0;
  double seconds = 0.0;
  ExchangeResult exchange;
};

/// Welfare of one action on the true window.
Evaluation evaluate_action(const rl::ActionVector& action, const System& system, const WindowData& truth,
                           const std::vector<MgStartState>& start, const ExchangeConfig& config);

struct OracleResult {
  rl::ActionVector best_action;
  double best_welfare = 0.0;
  long long evaluations = 0;
  double seconds = 0.0;
};

/// Evenly spaced grid including both bounds (one point -> the lower bound).
std::vector<double> price_grid(const rl::PriceBounds& bounds, int points);

/// Exhaustive welfare maximization over the price grid for every (mg, step).
/// Throws ValidationError when points^(N*T) exceeds max_evaluations.
OracleResult centralized_oracle(const System& system, const WindowData& truth, const std::vector<MgStartState>& start,
                                const rl::PriceBounds& bounds, int points, const ExchangeConfig& config,
                                long long max_evaluations = 1000000);

/// Pro-rata split of `revenue` by |PCC energy|; equal split when all are zero.
std::vector<double> allocate_revenue(double revenue, const std::vector<double>& pcc_energy_kwh);

}  // namespace gridcoop::coord
