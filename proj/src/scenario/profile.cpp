#include <cmath>
#include <numbers>
#include <random>
#include <regex>
#include <sstream>

#include <fmt/format.h>

#include "gridcoop/errors.hpp"
#include "gridcoop/scenario.hpp"
#include "gridcoop/text.hpp"

namespace gridcoop::scenario {

void ScenarioProfile::validate() const {
  if (!(dt_h > 0.0)) throw ValidationError(fmt::format("profile: dt_h must be > 0, got {}", dt_h));
  if (mgs < 1) throw ValidationError("profile: needs at least one microgrid");
  if (wholesale_price.empty()) throw ValidationError("profile: no timesteps");
  const auto T = wholesale_price.size();
  if (load_kw.size() != T || irradiance.size() != T) throw ValidationError("profile: series lengths differ");
  for (std::size_t t = 0; t < T; ++t) {
    if (!(wholesale_price[t] >= 0.0)) {
      throw ValidationError(fmt::format("profile: step {} wholesale_price {} is negative", t, wholesale_price[t]));
    }
    if (load_kw[t].size() != static_cast<std::size_t>(mgs) || irradiance[t].size() != static_cast<std::size_t>(mgs)) {
      throw ValidationError(fmt::format("profile: step {} has the wrong number of microgrids", t));
    }
    for (int n = 0; n < mgs; ++n) {
      if (!(load_kw[t][n] >= 0.0)) {
        throw ValidationError(fmt::format("profile: step {} load_kw_{} = {} is negative", t, n + 1, load_kw[t][n]));
      }
      if (!(irradiance[t][n] >= 0.0 && irradiance[t][n] <= 1.0)) {
        throw ValidationError(
            fmt::format("profile: step {} irradiance_{} = {} outside [0,1]", t, n + 1, irradiance[t][n]));
      }
    }
  }
  for (const auto& ev : overrides) {
    if (ev.episode < 0 || ev.episode >= steps()) {
      throw ValidationError(fmt::format("profile: override '{}' at episode {} outside the horizon of {} steps", ev.path,
                                        ev.episode, steps()));
    }
  }
}

namespace {

OverrideEvent parse_override(const std::string& value, const std::string& where) {
  const auto cells = text::split_ws(value);
  if (cells.size() != 3) throw ValidationError(where + ": override needs 'episode path value'");
  return {static_cast<int>(text::to_int(cells[0], where)), cells[1], text::to_double(cells[2], where)};
}

enum class Column { step, price, load, irradiance };

struct ColumnSpec {
  Column kind;
  int mg = -1;
};

ColumnSpec classify(const std::string& name, const std::string& where) {
  static const std::regex load_re(R"(load_([a-z]+)_(\d+))");
  static const std::regex irr_re(R"(irradiance(_pu)?_(\d+))");
  static const std::regex price_re(R"(wholesale_price_([a-z_]+))");
  std::smatch m;
  if (name == "step") return {Column::step};
  if (std::regex_match(name, m, load_re)) {
    if (m[1] != "kw") {
      throw ValidationError(fmt::format("{}: unit mismatch in column '{}': load must be in kw, got {}", where, name,
                                        m[1].str()));
    }
    return {Column::load, std::stoi(m[2]) - 1};
  }
  if (std::regex_match(name, m, irr_re)) return {Column::irradiance, std::stoi(m[2]) - 1};
  if (std::regex_match(name, m, price_re)) {
    if (m[1] != "usd_per_kwh") {
      throw ValidationError(fmt::format("{}: unit mismatch in column '{}': wholesale price must be usd_per_kwh, got {}",
                                        where, name, m[1].str()));
    }
    return {Column::price};
  }
  throw ValidationError(fmt::format("{}: unknown column '{}'", where, name));
}

}  // namespace

ScenarioProfile parse_profile(const std::string& content, const std::string& origin) {
  ScenarioProfile p;
  std::istringstream in(content);
  std::string raw;
  int line_no = 0;
  bool have_schema = false;
  bool have_dt = false;
  std::vector<ColumnSpec> columns;
  std::vector<std::string> names;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = text::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const std::string where = fmt::format("{}:{}", origin, line_no);
    if (columns.empty()) {
      const auto eq = line.find('=');
      if (eq != std::string::npos) {
        const std::string key = text::trim(line.substr(0, eq));
        const std::string value = text::trim(line.substr(eq + 1));
        if (key == "schema_version") {
          if (text::to_int(value, where) != 1) {
            throw ValidationError(fmt::format("{}: unsupported schema_version {}", where, value));
          }
          have_schema = true;
        } else if (key == "dt_h") {
          p.dt_h = text::to_double(value, where);
          have_dt = true;
        } else if (key == "override") {
          p.overrides.push_back(parse_override(value, where));
        } else {
          throw ValidationError(fmt::format("{}: unknown key '{}'", where, key));
        }
        continue;
      }
      if (!have_schema) throw ValidationError(origin + ": missing schema_version");
      if (!have_dt) throw ValidationError(origin + ": missing dt_h");
      names = text::split(line, ',');
      int max_mg = -1;
      for (const auto& name : names) {
        columns.push_back(classify(name, where));
        max_mg = std::max(max_mg, columns.back().mg);
      }
      p.mgs = max_mg + 1;
      std::vector<int> seen_load(p.mgs, 0);
      std::vector<int> seen_irr(p.mgs, 0);
      int seen_price = 0;
      int seen_step = 0;
      for (const auto& c : columns) {
        if (c.kind == Column::load) ++seen_load[c.mg];
        if (c.kind == Column::irradiance) ++seen_irr[c.mg];
        if (c.kind == Column::price) ++seen_price;
        if (c.kind == Column::step) ++seen_step;
      }
      if (seen_step != 1 || seen_price != 1) {
        throw ValidationError(where + ": header needs exactly one step and one wholesale_price column");
      }
      for (int n = 0; n < p.mgs; ++n) {
        if (seen_load[n] != 1 || seen_irr[n] != 1) {
          throw ValidationError(fmt::format("{}: microgrid {} needs exactly one load and one irradiance column", where,
                                            n + 1));
        }
      }
      continue;
    }
    const auto cells = text::split(line, ',');
    if (cells.size() != columns.size()) {
      throw ValidationError(fmt::format("{}: expected {} fields, got {}", where, columns.size(), cells.size()));
    }
    const auto t = p.wholesale_price.size();
    p.wholesale_price.push_back(0.0);
    p.load_kw.emplace_back(p.mgs, 0.0);
    p.irradiance.emplace_back(p.mgs, 0.0);
    for (std::size_t k = 0; k < cells.size(); ++k) {
      const std::string cell_where = fmt::format("{} column '{}'", where, names[k]);
      switch (columns[k].kind) {
        case Column::step:
          if (text::to_int(cells[k], cell_where) != static_cast<long long>(t)) {
            throw ValidationError(fmt::format("{}: step {} out of sequence (expected {})", cell_where, cells[k], t));
          }
          break;
        case Column::price: {
          const double v = text::to_double(cells[k], cell_where);
          if (v < 0.0) throw ValidationError(fmt::format("{}: negative price {}", cell_where, v));
          p.wholesale_price[t] = v;
          break;
        }
        case Column::load: {
          const double v = text::to_double(cells[k], cell_where);
          if (v < 0.0) throw ValidationError(fmt::format("{}: negative load {}", cell_where, v));
          p.load_kw[t][columns[k].mg] = v;
          break;
        }
        case Column::irradiance: {
          const double v = text::to_double(cells[k], cell_where);
          if (!(v >= 0.0 && v <= 1.0)) throw ValidationError(fmt::format("{}: irradiance {} outside [0,1]", cell_where, v));
          p.irradiance[t][columns[k].mg] = v;
          break;
        }
      }
    }
  }
  if (columns.empty()) throw ValidationError(origin + ": missing header row");
  if (p.wholesale_price.empty()) throw ValidationError(origin + ": no timesteps");
  try {
    p.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(origin + ": " + e.what());
  }
  return p;
}

std::string format_profile(const ScenarioProfile& p) {
  p.validate();
  std::string out = "schema_version = 1\n";
  out += fmt::format("dt_h = {}\n", p.dt_h);
  for (const auto& ev : p.overrides) out += fmt::format("override = {} {} {}\n", ev.episode, ev.path, ev.value);
  out += "step,wholesale_price_usd_per_kwh";
  for (int n = 1; n <= p.mgs; ++n) out += fmt::format(",load_kw_{},irradiance_{}", n, n);
  out += '\n';
  for (int t = 0; t < p.steps(); ++t) {
    out += fmt::format("{},{}", t, p.wholesale_price[t]);
    for (int n = 0; n < p.mgs; ++n) out += fmt::format(",{},{}", p.load_kw[t][n], p.irradiance[t][n]);
    out += '\n';
  }
  return out;
}

ScenarioProfile load_profiles(const std::string& path) { return parse_profile(text::read_file(path), path); }

void save_profiles(const ScenarioProfile& profile, const std::string& path) {
  text::write_file(path, format_profile(profile));
}

void SyntheticSpec::validate() const {
  if (mgs < 1) throw ValidationError("synthetic: mgs must be >= 1");
  if (days < 1) throw ValidationError("synthetic: days must be >= 1");
  if (!(dt_h > 0.0) || std::abs(24.0 / dt_h - std::round(24.0 / dt_h)) > 1e-9) {
    throw ValidationError(fmt::format("synthetic: dt_h {} must divide 24 h", dt_h));
  }
  if (load_mean_kw.size() != 1 && load_mean_kw.size() != static_cast<std::size_t>(mgs)) {
    throw ValidationError("synthetic: load_mean_kw needs one value or one per microgrid");
  }
  for (double m : load_mean_kw) {
    if (!(m >= 0.0)) throw ValidationError("synthetic: load means must be >= 0");
  }
  if (!(load_morning >= 0.0 && load_evening >= 0.0 && load_morning + load_evening < 1.0)) {
    throw ValidationError("synthetic: load peak amplitudes must be >= 0 and sum below 1");
  }
  if (!(load_noise >= 0.0 && irradiance_noise >= 0.0 && price_noise >= 0.0)) {
    throw ValidationError("synthetic: noise levels must be >= 0");
  }
  if (!(0.0 <= sunrise_h && sunrise_h < sunset_h && sunset_h <= 24.0)) {
    throw ValidationError("synthetic: need 0 <= sunrise_h < sunset_h <= 24");
  }
  if (!(irradiance_peak >= 0.0 && irradiance_peak <= 1.0)) throw ValidationError("synthetic: irradiance_peak in [0,1]");
  if (!(price_base >= 0.0 && price_peak >= 0.0)) throw ValidationError("synthetic: prices must be >= 0");
}

ScenarioProfile generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  const int per_day = static_cast<int>(std::lround(24.0 / spec.dt_h));
  const int steps = per_day * spec.days;
  constexpr double two_pi = 2.0 * std::numbers::pi;

  ScenarioProfile p;
  p.dt_h = spec.dt_h;
  p.mgs = spec.mgs;
  p.load_kw.assign(steps, std::vector<double>(spec.mgs));
  p.irradiance.assign(steps, std::vector<double>(spec.mgs));
  p.wholesale_price.assign(steps, 0.0);
  for (int t = 0; t < steps; ++t) {
    // Hour at the middle of the step.
    const double h = std::fmod((t + 0.5) * spec.dt_h, 24.0);
    // Two daily peaks; each cosine term averages to zero over a day.
    const double shape = 1.0 + spec.load_morning * std::cos(two_pi * (h - 8.0) / 24.0 * 2.0) +
                         spec.load_evening * std::cos(two_pi * (h - 19.0) / 24.0);
    double bell = 0.0;
    if (h > spec.sunrise_h && h < spec.sunset_h) {
      bell = std::sin(std::numbers::pi * (h - spec.sunrise_h) / (spec.sunset_h - spec.sunrise_h));
    }
    for (int n = 0; n < spec.mgs; ++n) {
      const double mean = spec.load_mean_kw.size() == 1 ? spec.load_mean_kw[0] : spec.load_mean_kw[n];
      const double noise = spec.load_noise > 0.0 ? spec.load_noise * unit(rng) : 0.0;
      p.load_kw[t][n] = std::max(0.0, mean * shape * (1.0 + noise));
      double irr = spec.irradiance_peak * bell;
      if (irr > 0.0 && spec.irradiance_noise > 0.0) irr *= 1.0 + spec.irradiance_noise * unit(rng);
      p.irradiance[t][n] = std::clamp(irr, 0.0, 1.0);
    }
    const double dh = h - spec.price_peak_hour;
    double price = spec.price_base + spec.price_peak * std::exp(-0.5 * dh * dh / 4.0);
    if (spec.price_noise > 0.0) price += spec.price_noise * unit(rng);
    p.wholesale_price[t] = std::max(0.0, price);
  }
  p.validate();
  return p;
}

}  // namespace gridcoop::scenario
