#include <cmath>
#include <functional>
#include <limits>
#include <variant>

#include <fmt/format.h>

#include "gridcoop/errors.hpp"
#include "gridcoop/scenario.hpp"
#include "gridcoop/text.hpp"

namespace gridcoop::scenario {

namespace {

using FieldRef = std::variant<std::string*, int*, double*, bool*, std::uint64_t*>;

struct Field {
  const char* key;
  FieldRef ref;
};

// The single list of scalar keys. Order here is the canonical order.
std::vector<Field> fields(ExperimentConfig& c) {
  return {
      {"feeder", &c.feeder},
      {"profile", &c.profile},
      {"window", &c.window},
      {"gamma", &c.gamma},
      {"delta", &c.delta},
      {"mu", &c.mu},
      {"phi", &c.phi},
      {"epsilon", &c.epsilon},
      {"delta0", &c.delta0},
      {"price_min", &c.price_min},
      {"price_max", &c.price_max},
      {"e_pv", &c.e_pv},
      {"e_d_kw", &c.e_d_kw},
      {"training_rule", &c.training_rule},
      {"episodes", &c.episodes},
      {"theta_threshold", &c.theta_threshold},
      {"start_step", &c.start_step},
      {"fixed_window", &c.fixed_window},
      {"estimate_sigma", &c.estimate_sigma},
      {"v_threshold", &c.v_threshold},
      {"max_exchange", &c.max_exchange},
      {"feeder_slack_v", &c.feeder_slack_v},
      {"feas_tol", &c.feas_tol},
      {"slp_tol", &c.slp_tol},
      {"max_outer", &c.max_outer},
      {"trust_radius", &c.trust_radius},
      {"pf_tol", &c.pf_tol},
      {"pf_max_iter", &c.pf_max_iter},
      {"oracle_grid", &c.oracle_grid},
      {"seed", &c.seed},
  };
}

std::string show(const FieldRef& ref) {
  return std::visit(
      [](auto* p) -> std::string {
        using T = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<T, std::string>) {
          return *p;
        } else if constexpr (std::is_same_v<T, bool>) {
          return *p ? "true" : "false";
        } else {
          return fmt::format("{}", *p);
        }
      },
      ref);
}

void assign(const FieldRef& ref, const std::string& key, const std::string& raw) {
  const std::string value = text::trim(raw);
  const std::string where = "config key '" + key + "'";
  std::visit(
      [&](auto* p) {
        using T = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<T, std::string>) {
          *p = value;
        } else if constexpr (std::is_same_v<T, bool>) {
          if (value == "true" || value == "1") {
            *p = true;
          } else if (value == "false" || value == "0") {
            *p = false;
          } else {
            throw ValidationError(where + ": expected true/false, got '" + value + "'");
          }
        } else if constexpr (std::is_same_v<T, int>) {
          const auto v = text::to_int(value, where);
          if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
            throw ValidationError(where + ": out of range");
          }
          *p = static_cast<int>(v);
        } else if constexpr (std::is_same_v<T, std::uint64_t>) {
          if (value.empty() || value.front() == '-') throw ValidationError(where + ": expected an unsigned integer");
          try {
            std::size_t used = 0;
            const auto v = std::stoull(value, &used);
            if (used != value.size()) throw std::invalid_argument(value);
            *p = v;
          } catch (const std::logic_error&) {
            throw ValidationError(where + ": expected an unsigned integer, got '" + value + "'");
          }
        } else {
          *p = text::to_double(value, where);
        }
      },
      ref);
}

void require(bool ok, const std::string& key, const std::string& rule) {
  if (!ok) throw ValidationError("config key '" + key + "': " + rule);
}

}  // namespace

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  for (const auto& f : fields(*this)) {
    if (key == f.key) {
      assign(f.ref, key, value);
      return;
    }
  }
  throw ValidationError("unknown config key '" + key + "'");
}

std::vector<std::pair<std::string, std::string>> ExperimentConfig::entries() const {
  auto& self = const_cast<ExperimentConfig&>(*this);
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& f : fields(self)) out.emplace_back(f.key, show(f.ref));
  return out;
}

std::string ExperimentConfig::resolve(const std::string& path) const { return text::resolve(base_dir, path); }

void ExperimentConfig::validate() const {
  require(!feeder.empty(), "feeder", "must name a network file");
  require(!profile.empty(), "profile", "must name a profile file");
  require(!microgrids.empty(), "microgrids", "at least one microgrid is required");
  for (std::size_t i = 0; i < microgrids.size(); ++i) {
    require(!microgrids[i].name.empty() && !microgrids[i].assets.empty(), "microgrids",
            fmt::format("entry {} needs a name and an asset file", i + 1));
    for (std::size_t j = 0; j < i; ++j) {
      require(microgrids[j].name != microgrids[i].name, "microgrids", "duplicate name '" + microgrids[i].name + "'");
      require(microgrids[j].feeder_bus != microgrids[i].feeder_bus, "microgrids",
              fmt::format("two microgrids share feeder bus {}", microgrids[i].feeder_bus));
    }
  }
  require(window >= 1 && window <= 96, "window", "must be in [1, 96]");
  require(gamma >= 0.0 && gamma <= 1.0, "gamma", "must be in [0, 1]");
  require(delta > 0.0 && std::isfinite(delta), "delta", "must be > 0");
  require(mu >= 0.0 && std::isfinite(mu), "mu", "must be >= 0");
  require(phi >= 0.0 && phi < 1.0, "phi", "must be in [0, 1)");
  require(epsilon >= 0.0 && epsilon <= 1.0, "epsilon", "must be in [0, 1]");
  require(delta0 > 0.0 && std::isfinite(delta0), "delta0", "must be > 0");
  require(std::isfinite(price_min) && price_min >= 0.0, "price_min", "must be >= 0");
  require(std::isfinite(price_max) && price_max > price_min, "price_max", "must exceed price_min");
  require(e_pv > 0.0 && e_pv < 1.0, "e_pv", "must be in (0, 1)");
  require(e_d_kw > 0.0 && std::isfinite(e_d_kw), "e_d_kw", "must be > 0");
  require(training_rule == "rls" || training_rule == "sgd", "training_rule", "must be 'rls' or 'sgd'");
  require(episodes >= 1, "episodes", "must be >= 1");
  require(theta_threshold >= 0.0, "theta_threshold", "must be >= 0 (inf allowed)");
  require(start_step >= 0, "start_step", "must be >= 0");
  require(estimate_sigma >= 0.0 && estimate_sigma < 1.0, "estimate_sigma", "must be in [0, 1)");
  require(v_threshold > 0.0, "v_threshold", "must be > 0");
  require(max_exchange >= 1, "max_exchange", "must be >= 1");
  require(feeder_slack_v >= 0.5 && feeder_slack_v <= 1.5, "feeder_slack_v", "must be in [0.5, 1.5]");
  require(feas_tol > 0.0, "feas_tol", "must be > 0");
  require(slp_tol > 0.0, "slp_tol", "must be > 0");
  require(max_outer >= 1, "max_outer", "must be >= 1");
  require(trust_radius > 0.0, "trust_radius", "must be > 0");
  require(pf_tol > 0.0, "pf_tol", "must be > 0");
  require(pf_max_iter >= 1, "pf_max_iter", "must be >= 1");
  require(oracle_grid >= 1, "oracle_grid", "must be >= 1");
  for (const auto& ev : overrides) {
    require(ev.episode >= 0, "overrides", "episode must be >= 0");
    require(!ev.path.empty(), "overrides", "path must not be empty");
  }
}

ExperimentConfig parse_config(const std::string& content, const std::string& origin, const std::string& base_dir) {
  const auto doc = text::parse(content, origin);
  doc.require_schema(1);
  ExperimentConfig c;
  c.base_dir = base_dir;
  for (const auto& [key, entry] : doc.keys) {
    if (key == "schema_version") continue;
    try {
      c.set(key, entry.value);
    } catch (const ValidationError& e) {
      throw ValidationError(fmt::format("{}:{}: {}", origin, entry.line, e.what()));
    }
  }
  for (const auto& [name, rows] : doc.sections) {
    if (name != "microgrids" && name != "overrides") {
      throw ValidationError(fmt::format("{}: unknown section [{}]", origin, name));
    }
  }
  for (const auto& row : doc.section("microgrids")) {
    const std::string where = fmt::format("{}:{}", origin, row.line);
    if (row.cells.size() != 3) throw ValidationError(where + ": expected 'name assets feeder_bus'");
    c.microgrids.push_back({row.cells[0], row.cells[1], static_cast<int>(text::to_int(row.cells[2], where))});
  }
  for (const auto& row : doc.section("overrides")) {
    const std::string where = fmt::format("{}:{}", origin, row.line);
    if (row.cells.size() != 3) throw ValidationError(where + ": expected 'episode path value'");
    c.overrides.push_back({static_cast<int>(text::to_int(row.cells[0], where)), row.cells[1],
                           text::to_double(row.cells[2], where)});
  }
  try {
    c.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(origin + ": " + e.what());
  }
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  return parse_config(text::read_file(path), path, text::dirname(path));
}

std::string format_config(const ExperimentConfig& c) {
  std::string out = "schema_version = 1\n";
  for (const auto& [k, v] : c.entries()) out += fmt::format("{} = {}\n", k, v);
  out += "\n[microgrids]\n";
  for (const auto& m : c.microgrids) out += fmt::format("{} {} {}\n", m.name, m.assets, m.feeder_bus);
  if (!c.overrides.empty()) {
    out += "\n[overrides]\n";
    for (const auto& ev : c.overrides) out += fmt::format("{} {} {}\n", ev.episode, ev.path, ev.value);
  }
  return out;
}

std::string config_hash(const ExperimentConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : format_config(config)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return fmt::format("{:016x}", h);
}

}  // namespace gridcoop::scenario
