#include <filesystem>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "gridcoop/errors.hpp"
#include "gridcoop/scenario.hpp"
#include "gridcoop/text.hpp"

#ifndef GRIDCOOP_VERSION
#define GRIDCOOP_VERSION "unknown"
#endif

namespace gridcoop::scenario {

std::string log_header(int mgs) {
  std::string h = "episode,reward,q_hat,ape";
  for (int n = 1; n <= mgs; ++n) h += fmt::format(",price_mg_{}", n);
  for (int n = 1; n <= mgs; ++n) h += fmt::format(",pcc_kw_mg_{}", n);
  h += ",p_w_kw,welfare";
  return h;
}

std::string format_log(const std::vector<LogRow>& rows, int mgs) {
  std::string out = log_header(mgs) + "\n";
  for (const auto& r : rows) {
    if (r.price_mg.size() != static_cast<std::size_t>(mgs) || r.pcc_kw_mg.size() != static_cast<std::size_t>(mgs)) {
      throw ValidationError(fmt::format("log row {} does not have {} microgrids", r.episode, mgs));
    }
    out += fmt::format("{},{},{},{}", r.episode, r.reward, r.q_hat, r.ape);
    for (double v : r.price_mg) out += fmt::format(",{}", v);
    for (double v : r.pcc_kw_mg) out += fmt::format(",{}", v);
    out += fmt::format(",{},{}\n", r.p_w_kw, r.welfare);
  }
  return out;
}

std::vector<LogRow> parse_log(const std::string& content, const std::string& origin) {
  std::istringstream in(content);
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(origin + ": empty log");
  const auto names = text::split(text::trim(line), ',');
  if (names.size() < 6 || (names.size() - 6) % 2 != 0) throw ValidationError(origin + ": malformed log header");
  const int mgs = static_cast<int>((names.size() - 6) / 2);
  if (text::trim(line) != log_header(mgs)) throw ValidationError(origin + ": unexpected log header");
  std::vector<LogRow> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    const std::string where = fmt::format("{}:{}", origin, line_no);
    const auto cells = text::split(line, ',');
    if (cells.size() != names.size()) throw ValidationError(where + ": wrong number of fields");
    LogRow r;
    std::size_t k = 0;
    r.episode = static_cast<int>(text::to_int(cells[k++], where));
    r.reward = text::to_double(cells[k++], where);
    r.q_hat = text::to_double(cells[k++], where);
    r.ape = text::to_double(cells[k++], where);
    for (int n = 0; n < mgs; ++n) r.price_mg.push_back(text::to_double(cells[k++], where));
    for (int n = 0; n < mgs; ++n) r.pcc_kw_mg.push_back(text::to_double(cells[k++], where));
    r.p_w_kw = text::to_double(cells[k++], where);
    r.welfare = text::to_double(cells[k++], where);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string code_version() { return GRIDCOOP_VERSION; }

std::string format_manifest(const Manifest& m) {
  nlohmann::ordered_json j;
  j["command"] = m.command;
  j["code_version"] = code_version();
  j["seed"] = m.seed;
  j["config_hash"] = config_hash(m.config);
  nlohmann::ordered_json cfg;
  for (const auto& [k, v] : m.config.entries()) cfg[k] = v;
  nlohmann::ordered_json mgs = nlohmann::ordered_json::array();
  for (const auto& mg : m.config.microgrids) {
    mgs.push_back({{"name", mg.name}, {"assets", mg.assets}, {"feeder_bus", mg.feeder_bus}});
  }
  cfg["microgrids"] = mgs;
  nlohmann::ordered_json ovs = nlohmann::ordered_json::array();
  for (const auto& ev : m.config.overrides) {
    ovs.push_back({{"episode", ev.episode}, {"path", ev.path}, {"value", ev.value}});
  }
  cfg["overrides"] = ovs;
  j["config"] = cfg;
  j["config_text"] = format_config(m.config);
  j["outputs"] = m.outputs;
  j["metrics"] = m.metrics;
  return j.dump(2) + "\n";
}

void persist_results(const std::vector<LogRow>& rows, int mgs, Manifest manifest, const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory", dir);
  const std::string csv = (std::filesystem::path(dir) / "episodes.csv").string();
  text::write_file(csv, format_log(rows, mgs));
  manifest.outputs["episodes"] = "episodes.csv";
  text::write_file((std::filesystem::path(dir) / "manifest.json").string(), format_manifest(manifest));
}

}  // namespace gridcoop::scenario
