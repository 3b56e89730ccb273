#pragma once

// Scenario inputs and run outputs: time-series profiles (CSV), the experiment
// configuration (key-value text), the per-episode log (CSV) and the run
// manifest (JSON). See data/README for every schema.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace gridcoop::scenario {

/// Parameter change applied from `episode` onwards, e.g. `*.dg.fuel_price`.
struct OverrideEvent {
  int episode = 0;
  std::string path;
  double value = 0.0;
};

struct ScenarioProfile {
  double dt_h = 1.0;
  int mgs = 0;
  // [step][mg]
  std::vector<std::vector<double>> load_kw;
  std::vector<std::vector<double>> irradiance;
  // [step], $/kWh
  std::vector<double> wholesale_price;
  std::vector<OverrideEvent> overrides;

  int steps() const noexcept { return static_cast<int>(wholesale_price.size()); }
  void validate() const;
};

ScenarioProfile parse_profile(const std::string& content, const std::string& origin = "<string>");
std::string format_profile(const ScenarioProfile& profile);
ScenarioProfile load_profiles(const std::string& path);
void save_profiles(const ScenarioProfile& profile, const std::string& path);

struct SyntheticSpec {
  int mgs = 2;
  int days = 1;
  double dt_h = 0.25;
  std::vector<double> load_mean_kw{300.0};  // one entry, or one per MG
  double load_morning = 0.15;   // relative amplitude of the morning peak
  double load_evening = 0.30;   // relative amplitude of the evening peak
  double load_noise = 0.03;     // relative std dev
  double sunrise_h = 6.0;
  double sunset_h = 19.0;
  double irradiance_peak = 0.9;
  double irradiance_noise = 0.05;
  double price_base = 0.10;     // $/kWh
  double price_peak = 0.06;     // evening peak height, $/kWh
  double price_peak_hour = 19.0;
  double price_noise = 0.0;

  void validate() const;
};

ScenarioProfile generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

/// Microgrid placement: asset file and the feeder bus hosting its PCC.
struct MicrogridEntry {
  std::string name;
  std::string assets;
  int feeder_bus = 0;
};

struct ExperimentConfig {
  std::string base_dir;  // relative paths resolve against this
  std::string feeder;
  std::string profile;
  std::vector<MicrogridEntry> microgrids;

  // Agent
  int window = 4;
  double gamma = 0.99;
  double delta = 0.01;  // step of the plain gradient rule
  double mu = 1e-5;
  double phi = 0.01;
  double epsilon = 0.1;
  double delta0 = 1e3;
  double price_min = 0.1;
  double price_max = 0.5;
  double e_pv = 0.05;
  double e_d_kw = 5.0;
  std::string training_rule = "rls";

  // Episodes
  int episodes = 500;
  double theta_threshold = 1e-4;
  int start_step = 0;
  bool fixed_window = false;
  double estimate_sigma = 0.02;

  // Exchange and solvers
  double v_threshold = 1e-4;
  int max_exchange = 20;
  double feeder_slack_v = 1.0;
  double feas_tol = 1e-4;
  double slp_tol = 1e-5;
  int max_outer = 50;
  double trust_radius = 0.1;
  double pf_tol = 1e-8;
  int pf_max_iter = 30;

  int oracle_grid = 6;
  std::uint64_t seed = 1;
  std::vector<OverrideEvent> overrides;

  /// Range checks on every field; throws ValidationError naming the key.
  void validate() const;
  /// Applies `key=value`. Unknown keys and values of the wrong type throw.
  void set(const std::string& key, const std::string& value);
  /// Every scalar key with its current value, in a fixed order.
  std::vector<std::pair<std::string, std::string>> entries() const;

  std::string resolve(const std::string& path) const;
};

ExperimentConfig parse_config(const std::string& content, const std::string& origin = "<string>",
                              const std::string& base_dir = "");
ExperimentConfig load_config(const std::string& path);
/// Canonical text form; parse_config(format_config(c)) == c.
std::string format_config(const ExperimentConfig& config);
/// FNV-1a 64 of the canonical text, as 16 hex digits.
std::string config_hash(const ExperimentConfig& config);

/// One line of the per-episode CSV log.
struct LogRow {
  int episode = 0;
  double reward = 0.0;
  double q_hat = 0.0;
  double ape = 0.0;
  std::vector<double> price_mg;  // window mean, $/kWh
  std::vector<double> pcc_kw_mg; // window mean, kW
  double p_w_kw = 0.0;           // window mean
  double welfare = 0.0;

  bool operator==(const LogRow&) const = default;
};

std::string log_header(int mgs);
std::string format_log(const std::vector<LogRow>& rows, int mgs);
std::vector<LogRow> parse_log(const std::string& content, const std::string& origin = "<string>");

struct Manifest {
  std::string command;
  ExperimentConfig config;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> outputs;  // label -> file name
  std::map<std::string, double> metrics;
};

std::string code_version();
std::string format_manifest(const Manifest& manifest);

/// Writes `<dir>/episodes.csv` and `<dir>/manifest.json`, creating `dir`.
void persist_results(const std::vector<LogRow>& rows, int mgs, Manifest manifest, const std::string& dir);

}  // namespace gridcoop::scenario
