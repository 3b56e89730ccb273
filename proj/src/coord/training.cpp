#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "gridcoop/coord.hpp"
#include "gridcoop/errors.hpp"

namespace gridcoop::coord {

double absolute_percentage_error(double reward, double prediction) noexcept {
  return std::abs(reward - prediction) / std::max(std::abs(reward), 1e-6);
}

rl::StateVector truth_state(const WindowData& truth) { return {truth.irradiance, truth.load_kw}; }

EpisodeRecord run_episode(rl::ValueModel& model, rl::RlsState& rls, const System& system, const WindowData& truth,
                          const std::vector<MgStartState>& start, const AgentConfig& agent,
                          const ExchangeConfig& exchange, rl::Rng& rng, ExchangeResult* exchange_out) {
  EpisodeRecord rec;
  rec.state = rl::sample_state(truth_state(truth), agent.errors, rng);
  rec.action = rl::select_action_eps_greedy(model, rec.state, agent.bounds, agent.epsilon, rng, &rec.explored);

  // the microgrids' own forecasts
  ExchangeInputs in{truth, truth.load_kw, truth.irradiance, start, {}};
  if (agent.estimate_sigma > 0.0) {
    std::normal_distribution<double> z(0.0, 1.0);
    for (Eigen::Index n = 0; n < truth.load_kw.rows(); ++n) {
      for (Eigen::Index t = 0; t < truth.load_kw.cols(); ++t) {
        const double load = truth.load_kw(n, t);
        in.load_estimate(n, t) = std::max(0.0, load + agent.estimate_sigma * load * z(rng));
        in.irradiance_estimate(n, t) = std::clamp(truth.irradiance(n, t) + agent.estimate_sigma * z(rng), 0.0, 1.0);
      }
    }
  }

  auto ex = fixed_point_exchange(rec.action, system, in, exchange);
  rec.pcc_kw = ex.pcc_kw;
  rec.p_w_kw = ex.p_w_kw;
  rec.wholesale_price = truth.wholesale_price;
  rec.exchange_iterations = ex.iterations;
  rec.reward = rl::compute_reward(truth.wholesale_price, ex.p_w_kw, rec.action.price, ex.pcc_kw, agent.gamma);
  rec.welfare = welfare(ex, truth, rec.action);

  const Eigen::VectorXd x = rl::feature_map(rec.state, rec.action);
  const Eigen::VectorXd before = model.theta;
  const auto up = agent.training_rule == "sgd" ? rl::sgd_update(model, x, rec.reward, agent.delta)
                                               : rl::rls_update(model, rls, x, rec.reward);
  rec.q_hat = up.prediction;
  rec.innovation = up.innovation;
  rec.rls_reset = up.reset;
  rec.ape = absolute_percentage_error(rec.reward, rec.q_hat);
  rec.theta_change = (model.theta - before).cwiseAbs().maxCoeff();
  if (exchange_out) *exchange_out = std::move(ex);
  return rec;
}

TrainingConfig training_config(const scenario::ExperimentConfig& c) {
  TrainingConfig t;
  t.agent.gamma = c.gamma;
  t.agent.delta = c.delta;
  t.agent.mu = c.mu;
  t.agent.phi = c.phi;
  t.agent.epsilon = c.epsilon;
  t.agent.delta0 = c.delta0;
  t.agent.bounds = {c.price_min, c.price_max};
  t.agent.errors = {c.e_pv, c.e_d_kw};
  t.agent.training_rule = c.training_rule;
  t.agent.estimate_sigma = c.estimate_sigma;
  t.exchange.v_threshold = c.v_threshold;
  t.exchange.max_iterations = c.max_exchange;
  t.exchange.slack_voltage = c.feeder_slack_v;
  t.exchange.dispatch.feas_tol = c.feas_tol;
  t.exchange.dispatch.slp_tol = c.slp_tol;
  t.exchange.dispatch.max_outer = c.max_outer;
  t.exchange.dispatch.trust_radius = c.trust_radius;
  t.exchange.dispatch.power_flow = {c.pf_tol, c.pf_max_iter};
  t.exchange.power_flow = {c.pf_tol, c.pf_max_iter};
  t.window = c.window;
  t.episodes = c.episodes;
  t.theta_threshold = c.theta_threshold;
  t.start_step = c.start_step;
  t.fixed_window = c.fixed_window;
  t.overrides = c.overrides;
  t.seed = c.seed;
  return t;
}

TrainingLog run_training(System system, const scenario::ScenarioProfile& profile, const TrainingConfig& cfg,
                         const std::optional<rl::Checkpoint>& warm_start,
                         const std::function<void(const EpisodeRecord&)>& on_episode) {
  if (cfg.episodes < 1) throw ValidationError("training needs at least one episode");
  if (profile.mgs != system.mgs()) {
    throw ValidationError(
        fmt::format("profile has {} microgrids, the system {}", profile.mgs, system.mgs()));
  }
  cfg.agent.bounds.validate();
  const int N = system.mgs();

  TrainingLog log;
  if (warm_start) {
    if (warm_start->model.mgs != N) throw ValidationError("checkpoint was trained for a different number of microgrids");
    log.model = warm_start->model;
    log.rls = warm_start->rls;
    log.rls.phi = cfg.agent.phi;
    log.rls.mu = cfg.agent.mu;
  } else {
    log.model = rl::ValueModel::zeros(N);
    log.rls = rl::RlsState::initial(rl::feature_dim(N), cfg.agent.phi, cfg.agent.mu, cfg.agent.delta0);
  }

  auto events = cfg.overrides;
  events.insert(events.end(), profile.overrides.begin(), profile.overrides.end());
  std::stable_sort(events.begin(), events.end(), [](const auto& a, const auto& b) { return a.episode < b.episode; });
  std::size_t next_event = 0;

  rl::Rng rng(cfg.seed);
  std::vector<MgStartState> start(N);
  for (int e = 0; e < cfg.episodes; ++e) {
    while (next_event < events.size() && events[next_event].episode <= e) apply_override(system, events[next_event++]);
    const int w0 = cfg.fixed_window ? cfg.start_step : (cfg.start_step + e) % profile.steps();
    const auto truth = window_data(profile, w0, cfg.window);
    ExchangeResult ex;
    EpisodeRecord rec;
    try {
      rec = run_episode(log.model, log.rls, system, truth, start, cfg.agent, cfg.exchange, rng, &ex);
    } catch (const NumericalError& err) {
      throw NumericalError(fmt::format("episode {} (window start {}): {}", e, w0, err.what()));
    }
    rec.episode = e;
    rec.window_start = w0;
    if (!cfg.fixed_window) {
      // the next window starts one step later, from where this one's first step left off
      for (int n = 0; n < N; ++n) {
        const auto& s0 = ex.dispatch[n].steps.front();
        start[n].soc = s0.soc;
        start[n].dg_prev_kw.assign(s0.dg_p.begin(), s0.dg_p.end());
      }
    }
    if (on_episode) on_episode(rec);
    const bool done = rec.theta_change < cfg.theta_threshold;
    log.episodes.push_back(std::move(rec));
    if (done) {
      log.converged = true;
      break;
    }
  }
  return log;
}

scenario::LogRow log_row(const EpisodeRecord& rec) {
  scenario::LogRow row;
  row.episode = rec.episode;
  row.reward = rec.reward;
  row.q_hat = rec.q_hat;
  row.ape = rec.ape;
  for (Eigen::Index n = 0; n < rec.action.price.rows(); ++n) {
    row.price_mg.push_back(rec.action.price.row(n).mean());
    row.pcc_kw_mg.push_back(rec.pcc_kw.row(n).mean());
  }
  double pw = 0.0;
  for (double v : rec.p_w_kw) pw += v;
  row.p_w_kw = rec.p_w_kw.empty() ? 0.0 : pw / static_cast<double>(rec.p_w_kw.size());
  row.welfare = rec.welfare;
  return row;
}

}  // namespace gridcoop::coord
