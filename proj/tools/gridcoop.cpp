// gridcoop: experiment driver. One subcommand per experiment; every run
// writes its outputs plus a manifest under --out.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "gridcoop/coord.hpp"
#include "gridcoop/dispatch.hpp"
#include "gridcoop/errors.hpp"
#include "gridcoop/grid.hpp"
#include "gridcoop/rl.hpp"
#include "gridcoop/scenario.hpp"
#include "gridcoop/text.hpp"

namespace fs = std::filesystem;
using namespace gridcoop;

namespace {

enum Exit { ok = 0, validation = 1, numerical = 2, io = 3 };

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::vector<std::string> sets;
};

scenario::ExperimentConfig load(const Common& c) {
  if (c.config.empty()) throw ValidationError("--config is required for this subcommand");
  auto cfg = scenario::load_config(c.config);
  for (const auto& kv : c.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ValidationError("--set expects key=value, got '" + kv + "'");
    cfg.set(text::trim(kv.substr(0, eq)), kv.substr(eq + 1));
  }
  if (c.seed) cfg.seed = *c.seed;
  cfg.validate();
  return cfg;
}

std::string out_file(const Common& c, const std::string& name) {
  std::error_code ec;
  fs::create_directories(c.out, ec);
  if (ec) throw IoError("cannot create output directory", c.out);
  return (fs::path(c.out) / name).string();
}

std::vector<double> number_list(const std::string& s, const std::string& what) {
  std::vector<double> v;
  for (const auto& cell : text::split(s, ',')) v.push_back(text::to_double(text::trim(cell), what));
  return v;
}

double mean(const std::vector<double>& v, std::size_t from, std::size_t to) {
  to = std::min(to, v.size());
  if (from >= to) return 0.0;
  double s = 0.0;
  for (std::size_t i = from; i < to; ++i) s += v[i];
  return s / static_cast<double>(to - from);
}

std::string join_prices(const Eigen::MatrixXd& p) {
  std::string s;
  for (Eigen::Index n = 0; n < p.rows(); ++n) {
    for (Eigen::Index t = 0; t < p.cols(); ++t) s += fmt::format("{}{}", s.empty() ? "" : ";", p(n, t));
  }
  return s;
}

int cmd_train(const Common& c, const std::string& warm) {
  const auto cfg = load(c);
  const auto system = coord::build_system(cfg);
  const auto profile = scenario::load_profiles(cfg.resolve(cfg.profile));
  std::optional<rl::Checkpoint> start;
  if (!warm.empty()) start = rl::load_checkpoint(warm);

  const auto t0 = std::chrono::steady_clock::now();
  const auto log = coord::run_training(system, profile, coord::training_config(cfg), start);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  std::vector<scenario::LogRow> rows;
  std::vector<double> ape;
  for (const auto& r : log.episodes) {
    rows.push_back(coord::log_row(r));
    ape.push_back(r.ape);
  }
  scenario::Manifest m{"train", cfg, cfg.seed, {}, {}};
  rl::save_checkpoint({log.model, log.rls}, out_file(c, "model.ckpt"));
  m.outputs["checkpoint"] = "model.ckpt";
  m.metrics["episodes_run"] = static_cast<double>(rows.size());
  m.metrics["converged"] = log.converged ? 1.0 : 0.0;
  m.metrics["rls_resets"] = log.rls.resets;
  m.metrics["max_ape_first_50"] = ape.empty() ? 0.0 : *std::max_element(ape.begin(), ape.begin() + std::min<std::size_t>(50, ape.size()));
  m.metrics["mape_last_50"] = mean(ape, ape.size() > 50 ? ape.size() - 50 : 0, ape.size());
  m.metrics["seconds"] = secs;
  scenario::persist_results(rows, system.mgs(), m, c.out);
  fmt::print("trained {} episodes in {:.2f} s{}; MAPE over the last 50: {:.4f}\n", rows.size(), secs,
             log.converged ? " (parameter change below threshold)" : "", m.metrics["mape_last_50"]);
  return ok;
}

// Greedy action of a checkpoint on the configured window, scored on the truth.
struct Greedy {
  rl::ActionVector action;
  coord::Evaluation eval;
};

Greedy greedy(const scenario::ExperimentConfig& cfg, const coord::System& system, const coord::WindowData& window,
              const rl::Checkpoint& cp) {
  const auto tc = coord::training_config(cfg);
  if (cp.model.mgs != system.mgs()) throw ValidationError("checkpoint was trained for a different number of microgrids");
  const auto t0 = std::chrono::steady_clock::now();
  Greedy g;
  g.action = rl::select_action_optimal(cp.model, coord::truth_state(window), tc.agent.bounds);
  g.eval = coord::evaluate_action(g.action, system, window, {}, tc.exchange);
  g.eval.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return g;
}

int cmd_evaluate(const Common& c, const std::string& checkpoint) {
  const auto cfg = load(c);
  const auto system = coord::build_system(cfg);
  const auto profile = scenario::load_profiles(cfg.resolve(cfg.profile));
  const auto window = coord::window_data(profile, cfg.start_step, cfg.window);
  const auto g = greedy(cfg, system, window, rl::load_checkpoint(checkpoint));

  std::string csv = "mg,step,price,pcc_kw,pcc_kvar,v_pcc\n";
  for (int n = 0; n < system.mgs(); ++n) {
    for (int t = 0; t < window.steps(); ++t) {
      csv += fmt::format("{},{},{},{},{},{}\n", system.sites[n].assets.name, t, g.action.price(n, t),
                         g.eval.exchange.pcc_kw(n, t), g.eval.exchange.pcc_kvar(n, t), g.eval.exchange.v_pcc(n, t));
    }
  }
  text::write_file(out_file(c, "evaluation.csv"), csv);
  scenario::Manifest m{"evaluate", cfg, cfg.seed, {{"evaluation", "evaluation.csv"}}, {}};
  m.metrics["welfare"] = g.eval.welfare;
  m.metrics["seconds"] = g.eval.seconds;
  m.metrics["exchange_iterations"] = g.eval.exchange.iterations;
  text::write_file(out_file(c, "manifest.json"), scenario::format_manifest(m));
  fmt::print("greedy welfare {:.6f} $ over {} steps ({:.4f} s)\n", g.eval.welfare, window.steps(), g.eval.seconds);
  return ok;
}

int cmd_oracle(const Common& c, const std::string& checkpoint, long long max_eval) {
  const auto cfg = load(c);
  const auto system = coord::build_system(cfg);
  const auto profile = scenario::load_profiles(cfg.resolve(cfg.profile));
  const auto window = coord::window_data(profile, cfg.start_step, cfg.window);
  const auto tc = coord::training_config(cfg);
  const auto oracle =
      coord::centralized_oracle(system, window, {}, tc.agent.bounds, cfg.oracle_grid, tc.exchange, max_eval);

  std::string csv = "method,welfare,seconds,evaluations,prices\n";
  csv += fmt::format("oracle,{},{},{},{}\n", oracle.best_welfare, oracle.seconds, oracle.evaluations,
                     join_prices(oracle.best_action.price));
  scenario::Manifest m{"oracle", cfg, cfg.seed, {{"comparison", "comparison.csv"}}, {}};
  m.metrics["oracle_welfare"] = oracle.best_welfare;
  m.metrics["oracle_seconds"] = oracle.seconds;
  int code = ok;
  if (!checkpoint.empty()) {
    const auto g = greedy(cfg, system, window, rl::load_checkpoint(checkpoint));
    csv += fmt::format("rl,{},{},1,{}\n", g.eval.welfare, g.eval.seconds, join_prices(g.action.price));
    m.metrics["rl_welfare"] = g.eval.welfare;
    m.metrics["rl_seconds"] = g.eval.seconds;
    // shortfall relative to the oracle; welfare can be negative
    m.metrics["welfare_gap"] = (oracle.best_welfare - g.eval.welfare) / std::max(std::abs(oracle.best_welfare), 1e-9);
    // the greedy action is a grid point, so the oracle cannot lose to it
    if (g.eval.welfare > oracle.best_welfare + 1e-9 * std::max(1.0, std::abs(oracle.best_welfare))) {
      std::cerr << fmt::format("error: RL welfare {} exceeds oracle welfare {}\n", g.eval.welfare,
                               oracle.best_welfare);
      code = numerical;
    }
    fmt::print("rl     welfare {:.6f} $ ({:.4f} s)\n", g.eval.welfare, g.eval.seconds);
  }
  text::write_file(out_file(c, "comparison.csv"), csv);
  text::write_file(out_file(c, "manifest.json"), scenario::format_manifest(m));
  fmt::print("oracle welfare {:.6f} $ ({} evaluations, {:.4f} s)\n", oracle.best_welfare, oracle.evaluations,
             oracle.seconds);
  return code;
}

int cmd_powerflow(const Common& c, const std::string& network, const std::string& injections, double slack_v,
                  double scale) {
  std::string path = network;
  if (path.empty()) {
    const auto cfg = load(c);
    path = cfg.resolve(cfg.feeder);
  }
  const auto net = grid::load_network(path);
  auto inj = grid::background_injections(net, scale);
  if (!injections.empty()) {
    // bus,p_kw,q_kvar; positive = generation into the bus
    const auto body = text::read_file(injections);
    std::istringstream in(body);
    std::string line;
    int no = 0;
    while (std::getline(in, line)) {
      ++no;
      const auto t = text::trim(line);
      if (t.empty() || t[0] == '#' || (no == 1 && t.rfind("bus", 0) == 0)) continue;
      const auto where = fmt::format("{}:{}", injections, no);
      const auto cells = text::split(t, ',');
      if (cells.size() != 3) throw ValidationError(where + ": expected 'bus,p_kw,q_kvar'");
      const auto i = net.index_of(static_cast<int>(text::to_int(text::trim(cells[0]), where)));
      inj.p[i] += text::to_double(text::trim(cells[1]), where) / net.base_kva;
      inj.q[i] += text::to_double(text::trim(cells[2]), where) / net.base_kva;
    }
  }
  const auto pf = grid::solve_power_flow(net, inj, slack_v);
  const auto flows = grid::line_flows(net, pf.state);
  std::string csv = "bus,v_pu,theta_rad\n";
  fmt::print("{:>6} {:>10} {:>12}\n", "bus", "v [pu]", "theta [rad]");
  for (std::size_t i = 0; i < net.size(); ++i) {
    fmt::print("{:>6} {:>10.6f} {:>12.6f}\n", net.buses[i].id, pf.state.v[i], pf.state.theta[i]);
    csv += fmt::format("{},{},{}\n", net.buses[i].id, pf.state.v[i], pf.state.theta[i]);
  }
  fmt::print("slack P {:.3f} kW, Q {:.3f} kvar, losses {:.3f} kW, {} iterations\n", pf.slack_p * net.base_kva,
             pf.slack_q * net.base_kva, grid::total_losses(flows) * net.base_kva, pf.iterations);
  text::write_file(out_file(c, "powerflow.csv"), csv);
  return ok;
}

struct DispatchArgs {
  std::string assets, prices, load, irradiance, soc, pcc_voltage;
  double dt = 1.0;
};

int cmd_dispatch(const Common& c, const DispatchArgs& a) {
  const auto mg = dispatch::load_assets(a.assets);
  auto price = number_list(a.prices, "--prices");
  auto load = number_list(a.load, "--load");
  if (load.size() == 1) load.assign(price.size(), load[0]);
  std::vector<double> irr(price.size(), 0.0);
  if (!a.irradiance.empty()) irr = number_list(a.irradiance, "--irradiance");
  if (irr.size() == 1) irr.assign(price.size(), irr[0]);
  std::vector<double> v;
  if (!a.pcc_voltage.empty()) v = number_list(a.pcc_voltage, "--pcc-voltage");
  auto p = dispatch::make_problem(mg, price, load, irr, a.dt, v);
  if (!a.soc.empty()) p.soc_init = number_list(a.soc, "--soc");
  p.validate(mg);
  const auto sol = dispatch::solve_dispatch(p, mg);
  const auto audit = dispatch::audit_dispatch(p, mg, sol);

  std::string csv = "step,price,pcc_kw,pcc_kvar";
  for (std::size_t g = 0; g < mg.dgs.size(); ++g) csv += fmt::format(",dg{}_kw", g + 1);
  for (std::size_t e = 0; e < mg.ess.size(); ++e) csv += fmt::format(",ess{}_ch_kw,ess{}_dis_kw,ess{}_soc", e + 1, e + 1, e + 1);
  csv += "\n";
  for (int t = 0; t < p.steps; ++t) {
    const auto& s = sol.steps[t];
    fmt::print("step {}: price {:.4f} PCC {:.3f} kW {:.3f} kvar", t, price[t], s.pcc_p, s.pcc_q);
    csv += fmt::format("{},{},{},{}", t, price[t], s.pcc_p, s.pcc_q);
    for (double g : s.dg_p) {
      fmt::print(" DG {:.3f}", g);
      csv += fmt::format(",{}", g);
    }
    for (std::size_t e = 0; e < s.soc.size(); ++e) {
      fmt::print(" ESS +{:.3f}/-{:.3f} soc {:.4f}", s.ess_ch[e], s.ess_dis[e], s.soc[e]);
      csv += fmt::format(",{},{},{}", s.ess_ch[e], s.ess_dis[e], s.soc[e]);
    }
    fmt::print("\n");
    csv += "\n";
  }
  fmt::print("objective {:.6f} $, {} SLP iterations\n", sol.objective, sol.slp_iterations);
  text::write_file(out_file(c, "dispatch.csv"), csv);
  if (!audit.ok()) {
    for (const auto& viol : audit.violations) {
      std::cerr << fmt::format("audit: {} {} ({:.3g})\n", viol.family, viol.detail, viol.amount);
    }
    return numerical;
  }
  fmt::print("audit passed (max violation {:.3g})\n", audit.max_violation);
  return ok;
}

// Trailing-mean APE per episode and a one-line summary per log, the inputs of
// the learning and adaptability figures.
int cmd_report_data(const Common& c, const std::vector<std::string>& inputs, int window) {
  if (window < 1) throw ValidationError("--window must be >= 1");
  std::string summary = "log,episodes,mean_reward,mean_welfare,mape_last\n";
  for (const auto& path : inputs) {
    const auto rows = scenario::parse_log(text::read_file(path), path);
    std::vector<double> ape, reward, welfare;
    for (const auto& r : rows) {
      ape.push_back(r.ape);
      reward.push_back(r.reward);
      welfare.push_back(r.welfare);
    }
    std::string csv = "episode,ape,mape\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const std::size_t from = i + 1 > static_cast<std::size_t>(window) ? i + 1 - window : 0;
      csv += fmt::format("{},{},{}\n", rows[i].episode, ape[i], mean(ape, from, i + 1));
    }
    const auto stem = fs::path(path).parent_path().filename().string() + "_" + fs::path(path).stem().string();
    text::write_file(out_file(c, stem + "_mape.csv"), csv);
    const std::size_t tail = rows.size() > static_cast<std::size_t>(window) ? rows.size() - window : 0;
    summary += fmt::format("{},{},{},{},{}\n", path, rows.size(), mean(reward, 0, rows.size()),
                           mean(welfare, 0, rows.size()), mean(ape, tail, rows.size()));
  }
  text::write_file(out_file(c, "summary.csv"), summary);
  return ok;
}

void add_common(CLI::App* sub, Common& c, bool needs_config) {
  auto* opt = sub->add_option("--config", c.config, "experiment configuration file");
  if (needs_config) opt->required();
  sub->add_option("--seed", c.seed, "random seed (overrides the configuration)");
  sub->add_option("--out", c.out, "output directory")->capture_default_str();
  sub->add_option("--set", c.sets, "configuration override key=value (repeatable)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bi-level price coordination of networked microgrids"};
  app.require_subcommand(1);
  Common c;

  auto* train = app.add_subcommand("train", "train the cooperative agent; writes episodes.csv, model.ckpt, manifest.json");
  add_common(train, c, true);
  std::string warm;
  train->add_option("--checkpoint", warm, "warm-start from this checkpoint");

  auto* evaluate = app.add_subcommand("evaluate", "score a checkpoint's greedy action on the configured window");
  add_common(evaluate, c, true);
  std::string checkpoint;
  evaluate->add_option("--checkpoint", checkpoint, "trained model")->required();

  auto* oracle = app.add_subcommand("oracle", "exhaustive welfare search on the configured window");
  add_common(oracle, c, true);
  std::string oracle_cp;
  long long max_eval = 1000000;
  oracle->add_option("--checkpoint", oracle_cp, "also score this model's greedy action");
  oracle->add_option("--max-evaluations", max_eval, "grid size guard")->capture_default_str();

  auto* powerflow = app.add_subcommand("powerflow", "one power flow with the background loads plus extra injections");
  add_common(powerflow, c, false);
  std::string network, injections;
  double slack_v = 1.0, scale = 1.0;
  powerflow->add_option("--network", network, "network file (default: the configured feeder)");
  powerflow->add_option("--injections", injections, "CSV bus,p_kw,q_kvar added to the background injections");
  powerflow->add_option("--slack-v", slack_v, "slack voltage, pu")->capture_default_str();
  powerflow->add_option("--load-scale", scale, "background load multiplier")->capture_default_str();

  auto* disp = app.add_subcommand("dispatch", "one microgrid dispatch with its audit");
  add_common(disp, c, false);
  DispatchArgs da;
  disp->add_option("--assets", da.assets, "microgrid asset file")->required();
  disp->add_option("--prices", da.prices, "retail prices per step, $/kWh, comma separated")->required();
  disp->add_option("--load", da.load, "aggregate load per step (or one value), kW")->required();
  disp->add_option("--irradiance", da.irradiance, "irradiance per step (or one value), [0,1]");
  disp->add_option("--soc", da.soc, "initial SOC per ESS");
  disp->add_option("--pcc-voltage", da.pcc_voltage, "PCC voltage per step, pu");
  disp->add_option("--dt", da.dt, "step length, h")->capture_default_str();

  auto* report = app.add_subcommand("report-data", "per-episode MAPE series and summaries from episode logs");
  add_common(report, c, false);
  std::vector<std::string> logs;
  int window = 50;
  report->add_option("--in", logs, "episodes.csv files")->required();
  report->add_option("--window", window, "trailing window of the MAPE series")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ok : validation;
  }

  try {
    if (*train) return cmd_train(c, warm);
    if (*evaluate) return cmd_evaluate(c, checkpoint);
    if (*oracle) return cmd_oracle(c, oracle_cp, max_eval);
    if (*powerflow) return cmd_powerflow(c, network, injections, slack_v, scale);
    if (*disp) return cmd_dispatch(c, da);
    if (*report) return cmd_report_data(c, logs, window);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return validation;
  } catch (const ExchangeDivergence& e) {
    std::cerr << "error: " << e.what() << "\n";
    for (std::size_t k = 0; k < e.trajectory().size(); ++k) {
      std::cerr << fmt::format("  iteration {}: {}\n", k + 1, fmt::join(e.trajectory()[k], " "));
    }
    return numerical;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return numerical;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return io;
  }
  return ok;
}
