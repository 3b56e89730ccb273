#include <algorithm>
#include <cmath>
#include <future>
#include <set>

#include <fmt/format.h>

#include "gridcoop/coord.hpp"
#include "gridcoop/errors.hpp"
#include "gridcoop/text.hpp"

namespace gridcoop::coord {

void System::validate() const {
  feeder.validate();
  if (sites.empty()) throw ValidationError("system has no microgrids");
  std::set<int> used;
  for (const auto& s : sites) {
    s.assets.validate();
    const auto i = feeder.index_of(s.feeder_bus);
    if (feeder.buses[i].type == grid::BusType::slack) {
      throw ValidationError(fmt::format("microgrid '{}' sits on the feeder slack bus {}", s.assets.name, s.feeder_bus));
    }
    if (!used.insert(s.feeder_bus).second) {
      throw ValidationError(fmt::format("feeder bus {} hosts more than one microgrid", s.feeder_bus));
    }
  }
}

System build_system(const scenario::ExperimentConfig& config) {
  System sys;
  sys.feeder = grid::load_network(config.resolve(config.feeder));
  for (const auto& m : config.microgrids) {
    MgSite site{dispatch::load_assets(config.resolve(m.assets)), m.feeder_bus};
    site.assets.name = m.name;
    sys.sites.push_back(std::move(site));
  }
  sys.validate();
  return sys;
}

namespace {

void set_field(double& slot, double value, const std::string& path) {
  if (!std::isfinite(value)) throw ValidationError("override '" + path + "': value must be finite");
  slot = value;
}

bool apply_to(dispatch::MgAssets& a, const std::vector<std::string>& parts, double value, const std::string& path) {
  if (parts.size() == 2) {
    if (parts[1] == "pcc_p_max_kw") return set_field(a.pcc_p_max_kw, value, path), true;
    if (parts[1] == "pcc_q_max_kvar") return set_field(a.pcc_q_max_kvar, value, path), true;
    return false;
  }
  if (parts.size() != 3) return false;
  const auto& kind = parts[1];
  const auto& f = parts[2];
  if (kind == "dg") {
    for (auto& u : a.dgs) {
      double* slot = f == "p_max_kw" ? &u.p_max_kw
                     : f == "q_max_kvar" ? &u.q_max_kvar
                     : f == "ramp_kw" ? &u.ramp_kw
                     : f == "a_f" ? &u.a_f
                     : f == "b_f" ? &u.b_f
                     : f == "c_f" ? &u.c_f
                     : f == "fuel_price" ? &u.fuel_price
                                         : nullptr;
      if (!slot) return false;
      set_field(*slot, value, path);
    }
    return true;
  }
  if (kind == "ess") {
    for (auto& u : a.ess) {
      double* slot = f == "capacity_kwh" ? &u.capacity_kwh
                     : f == "soc_min" ? &u.soc_min
                     : f == "soc_max" ? &u.soc_max
                     : f == "p_ch_max_kw" ? &u.p_ch_max_kw
                     : f == "p_dis_max_kw" ? &u.p_dis_max_kw
                     : f == "eta_ch" ? &u.eta_ch
                     : f == "eta_dis" ? &u.eta_dis
                     : f == "q_max_kvar" ? &u.q_max_kvar
                     : f == "soc_init" ? &u.soc_init
                                       : nullptr;
      if (!slot) return false;
      set_field(*slot, value, path);
    }
    return true;
  }
  if (kind == "pv") {
    for (auto& u : a.pvs) {
      double* slot = f == "rated_kw" ? &u.rated_kw : f == "q_max_kvar" ? &u.q_max_kvar : nullptr;
      if (!slot) return false;
      set_field(*slot, value, path);
    }
    return true;
  }
  return false;
}

}  // namespace

void apply_override(System& system, const scenario::OverrideEvent& event) {
  const auto parts = text::split(event.path, '.');
  if (parts.size() < 2) throw ValidationError("override path '" + event.path + "' is too short");
  bool matched = false;
  for (auto& site : system.sites) {
    if (parts[0] != "*" && parts[0] != site.assets.name) continue;
    matched = true;
    // an empty unit list still has to name a known field
    dispatch::MgAssets probe = site.assets;
    if (probe.dgs.empty()) probe.dgs.emplace_back();
    if (probe.ess.empty()) probe.ess.emplace_back();
    if (probe.pvs.empty()) probe.pvs.emplace_back();
    if (!apply_to(probe, parts, event.value, event.path)) {
      throw ValidationError("unknown override path '" + event.path + "'");
    }
    apply_to(site.assets, parts, event.value, event.path);
    try {
      site.assets.validate();
    } catch (const ValidationError& e) {
      throw ValidationError("override '" + event.path + "': " + e.what());
    }
  }
  if (!matched) throw ValidationError("override '" + event.path + "' matches no microgrid");
}

WindowData window_data(const scenario::ScenarioProfile& profile, int start, int steps) {
  if (profile.steps() == 0) throw ValidationError("profile has no timesteps");
  if (steps < 1) throw ValidationError("window needs at least one step");
  if (start < 0) throw ValidationError("window start must be >= 0");
  WindowData w;
  w.dt_h = profile.dt_h;
  w.load_kw.resize(profile.mgs, steps);
  w.irradiance.resize(profile.mgs, steps);
  for (int t = 0; t < steps; ++t) {
    const int k = (start + t) % profile.steps();
    for (int n = 0; n < profile.mgs; ++n) {
      w.load_kw(n, t) = profile.load_kw[k][n];
      w.irradiance(n, t) = profile.irradiance[k][n];
    }
    w.wholesale_price.push_back(profile.wholesale_price[k]);
  }
  return w;
}

namespace {

std::vector<double> row(const Eigen::MatrixXd& m, Eigen::Index n) {
  std::vector<double> out(m.cols());
  for (Eigen::Index t = 0; t < m.cols(); ++t) out[t] = m(n, t);
  return out;
}

double pv_kw(const dispatch::MgAssets& a, double irradiance) {
  double total = 0.0;
  for (const auto& u : a.pvs) total += u.rated_kw * irradiance;
  return total;
}

// kvar per kW of aggregate load
double q_ratio(const dispatch::MgAssets& a) {
  double r = 0.0;
  for (const auto& l : a.loads) r += l.share * l.q_ratio;
  return r;
}

void check_shape(const Eigen::MatrixXd& m, int rows, int cols, const char* what) {
  if (m.rows() != rows || m.cols() != cols) {
    throw ValidationError(fmt::format("{} is {}x{}, expected {}x{}", what, m.rows(), m.cols(), rows, cols));
  }
}

}  // namespace

ExchangeResult fixed_point_exchange(const rl::ActionVector& action, const System& system, const ExchangeInputs& in,
                                    const ExchangeConfig& cfg) {
  if (!(cfg.v_threshold > 0.0)) throw ValidationError("exchange voltage threshold must be > 0");
  if (cfg.max_iterations < 1) throw ValidationError("exchange needs at least one iteration");
  const int N = system.mgs();
  const int T = in.truth.steps();
  check_shape(action.price, N, T, "price matrix");
  check_shape(in.truth.load_kw, N, T, "load truth");
  check_shape(in.truth.irradiance, N, T, "irradiance truth");
  const Eigen::MatrixXd& load_est = in.load_estimate.size() ? in.load_estimate : in.truth.load_kw;
  const Eigen::MatrixXd& irr_est = in.irradiance_estimate.size() ? in.irradiance_estimate : in.truth.irradiance;
  check_shape(load_est, N, T, "load estimate");
  check_shape(irr_est, N, T, "irradiance estimate");
  if (!in.start.empty() && static_cast<int>(in.start.size()) != N) {
    throw ValidationError("start state needs one entry per microgrid");
  }

  // The PCC absorbs whatever the microgrid mis-forecast.
  Eigen::MatrixXd dp(N, T), dq(N, T);
  for (int n = 0; n < N; ++n) {
    const auto& a = system.sites[n].assets;
    for (int t = 0; t < T; ++t) {
      const double dload = in.truth.load_kw(n, t) - load_est(n, t);
      dp(n, t) = pv_kw(a, in.truth.irradiance(n, t)) - pv_kw(a, irr_est(n, t)) - dload;
      dq(n, t) = -dload * q_ratio(a);
    }
  }

  const auto& feeder = system.feeder;
  const auto y = grid::build_admittance(feeder);
  const double base = feeder.base_kva;
  std::vector<std::size_t> at(N);
  for (int n = 0; n < N; ++n) at[n] = feeder.index_of(system.sites[n].feeder_bus);

  ExchangeResult r;
  r.v_pcc = in.v_pcc_initial.size() ? in.v_pcc_initial : Eigen::MatrixXd::Constant(N, T, 1.0);
  check_shape(r.v_pcc, N, T, "initial PCC voltage");
  r.problems.resize(N);
  r.dispatch.resize(N);

  auto solve_one = [&](int n) {
    const auto& a = system.sites[n].assets;
    auto p = dispatch::make_problem(a, row(action.price, n), row(load_est, n), row(irr_est, n), in.truth.dt_h,
                                    row(r.v_pcc, n));
    if (!in.start.empty()) {
      p.soc_init = in.start[n].soc;
      p.dg_prev_kw = in.start[n].dg_prev_kw;
    }
    auto sol = dispatch::solve_dispatch(p, a, cfg.dispatch);
    r.problems[n] = std::move(p);
    r.dispatch[n] = std::move(sol);
  };

  for (int it = 1; it <= cfg.max_iterations; ++it) {
    if (cfg.parallel && N > 1) {
      std::vector<std::future<void>> jobs;
      for (int n = 0; n < N; ++n) jobs.push_back(std::async(std::launch::async, solve_one, n));
      for (auto& j : jobs) j.get();
    } else {
      for (int n = 0; n < N; ++n) solve_one(n);
    }

    r.pcc_kw.resize(N, T);
    r.pcc_kvar.resize(N, T);
    for (int n = 0; n < N; ++n) {
      for (int t = 0; t < T; ++t) {
        r.pcc_kw(n, t) = r.dispatch[n].steps[t].pcc_p + dp(n, t);
        r.pcc_kvar(n, t) = r.dispatch[n].steps[t].pcc_q + dq(n, t);
      }
    }

    r.feeder_states.assign(T, {});
    r.p_w_kw.assign(T, 0.0);
    r.losses_kw.assign(T, 0.0);
    Eigen::MatrixXd v_new(N, T);
    for (int t = 0; t < T; ++t) {
      grid::InjectionSet inj{std::vector<double>(feeder.size(), 0.0), std::vector<double>(feeder.size(), 0.0)};
      double total = 0.0;
      for (int n = 0; n < N; ++n) {
        inj.p[at[n]] += r.pcc_kw(n, t) / base;
        inj.q[at[n]] += r.pcc_kvar(n, t) / base;
        total += r.pcc_kw(n, t);
      }
      const auto pf = grid::solve_power_flow(feeder, y, inj, cfg.slack_voltage, cfg.power_flow);
      for (int n = 0; n < N; ++n) v_new(n, t) = pf.state.v[at[n]];
      r.p_w_kw[t] = -pf.slack_p * base;
      r.losses_kw[t] = total - r.p_w_kw[t];
      r.feeder_states[t] = pf.state;
    }

    std::vector<double> snap;
    for (int n = 0; n < N; ++n) {
      for (int t = 0; t < T; ++t) snap.push_back(v_new(n, t));
    }
    r.trajectory.push_back(std::move(snap));
    const double change = (N > 0 && T > 0) ? (v_new - r.v_pcc).cwiseAbs().maxCoeff() : 0.0;
    r.v_pcc = v_new;
    r.iterations = it;
    if (change < cfg.v_threshold) {
      r.fuel_usd = Eigen::MatrixXd::Zero(N, T);
      for (int n = 0; n < N; ++n) {
        const auto& a = system.sites[n].assets;
        for (int t = 0; t < T; ++t) {
          for (std::size_t g = 0; g < a.dgs.size(); ++g) {
            r.fuel_usd(n, t) += in.truth.dt_h * a.dgs[g].fuel_price *
                                dispatch::fuel_cost_committed(r.dispatch[n].steps[t].dg_p[g], a.dgs[g]);
          }
        }
      }
      return r;
    }
  }
  throw ExchangeDivergence(fmt::format("PCC voltages did not settle within {} exchange iterations (threshold {})",
                                       cfg.max_iterations, cfg.v_threshold),
                           r.trajectory);
}

std::vector<double> mg_costs(const ExchangeResult& r, const WindowData& truth, const rl::ActionVector& action) {
  std::vector<double> out(r.pcc_kw.rows(), 0.0);
  for (Eigen::Index n = 0; n < r.pcc_kw.rows(); ++n) {
    for (Eigen::Index t = 0; t < r.pcc_kw.cols(); ++t) {
      out[n] += r.fuel_usd(n, t) - truth.dt_h * action.price(n, t) * r.pcc_kw(n, t);
    }
  }
  return out;
}

double welfare(const ExchangeResult& r, const WindowData& truth, const rl::ActionVector& action) {
  const double revenue = truth.dt_h * rl::compute_reward(truth.wholesale_price, r.p_w_kw, action.price, r.pcc_kw, 1.0);
  double cost = 0.0;
  for (double c : mg_costs(r, truth, action)) cost += c;
  return revenue - cost;
}

std::vector<double> allocate_revenue(double revenue, const std::vector<double>& energy) {
  if (!std::isfinite(revenue)) throw ValidationError("revenue must be finite");
  if (energy.empty()) throw ValidationError("revenue allocation needs at least one microgrid");
  double total = 0.0;
  for (double e : energy) {
    if (!std::isfinite(e)) throw ValidationError("PCC energy must be finite");
    total += std::abs(e);
  }
  std::vector<double> credit(energy.size());
  for (std::size_t n = 0; n < energy.size(); ++n) {
    credit[n] = total > 0.0 ? revenue * std::abs(energy[n]) / total : revenue / static_cast<double>(energy.size());
  }
  return credit;
}

}  // namespace gridcoop::coord
