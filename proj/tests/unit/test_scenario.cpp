#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "gridcoop/errors.hpp"
#include "gridcoop/scenario.hpp"
#include "oracles.hpp"

using namespace gridcoop;
using namespace gridcoop::scenario;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string temp_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(p);
  return p.string();
}

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const ValidationError& e) {
    return e.what();
  }
  return "";
}

const char* small_profile =
    "schema_version = 1\n"
    "dt_h = 1\n"
    "step,wholesale_price_usd_per_kwh,load_kw_1,irradiance_1\n"
    "0,0.1,100,0\n"
    "1,0.2,120,0.5\n";

}  // namespace

TEST_CASE("profile parsing") {
  const auto p = parse_profile(small_profile);
  CHECK(p.steps() == 2);
  CHECK(p.mgs == 1);
  CHECK(p.load_kw[1][0] == 120.0);
  CHECK(p.irradiance[1][0] == 0.5);
  CHECK(p.wholesale_price[1] == 0.2);

  const std::string header_only = "schema_version = 1\ndt_h = 1\nstep,wholesale_price_usd_per_kwh,load_kw_1,irradiance_1\n";
  CHECK(error_of([&] { parse_profile(header_only); }).find("no timesteps") != std::string::npos);

  std::string negative = small_profile;
  negative.replace(negative.find("120"), 3, "-5");
  const auto msg = error_of([&] { parse_profile(negative, "p.csv"); });
  CHECK(msg.find("load_kw_1") != std::string::npos);
  CHECK(msg.find("p.csv:5") != std::string::npos);

  std::string mwh = small_profile;
  mwh.replace(mwh.find("usd_per_kwh"), 11, "usd_per_mwh");
  CHECK(error_of([&] { parse_profile(mwh); }).find("unit mismatch") != std::string::npos);
  std::string mw = small_profile;
  mw.replace(mw.find("load_kw_1"), 9, "load_mw_1");
  CHECK(error_of([&] { parse_profile(mw); }).find("unit mismatch") != std::string::npos);

  std::string schema = small_profile;
  schema.replace(schema.find("= 1"), 3, "= 9");
  CHECK(error_of([&] { parse_profile(schema); }).find("schema_version") != std::string::npos);

  std::string bright = small_profile;
  bright.replace(bright.find("0.5"), 3, "1.5");
  CHECK_THROWS_AS(parse_profile(bright), ValidationError);
  CHECK_THROWS_AS(load_profiles("/nonexistent/profile.csv"), IoError);
}

TEST_CASE("shipped profiles round trip") {
  for (const char* name : {"day96.csv", "desk_day.csv"}) {
    const auto p = load_profiles(oracle::data(name));
    const auto path = temp_dir("gridcoop_profile.csv");
    save_profiles(p, path);
    const auto q = load_profiles(path);
    CHECK(q.dt_h == p.dt_h);
    CHECK(q.load_kw == p.load_kw);
    CHECK(q.irradiance == p.irradiance);
    CHECK(q.wholesale_price == p.wholesale_price);
    CHECK(format_profile(q) == format_profile(p));
    std::filesystem::remove(path);
  }
  const auto p = load_profiles(oracle::data("day96.csv"));
  CHECK(p.steps() == 96);
  CHECK(p.mgs == 4);
  CHECK(p.dt_h == 0.25);
}

TEST_CASE("synthetic profile generator") {
  SyntheticSpec s;
  s.mgs = 1;
  s.days = 3;
  s.dt_h = 1.0;
  s.load_noise = s.irradiance_noise = s.price_noise = 0.0;
  const auto p = generate_synthetic(s, 1);
  for (int t = 0; t < 24; ++t) {
    CHECK(p.load_kw[t][0] == doctest::Approx(p.load_kw[t + 24][0]).epsilon(1e-12));
    CHECK(p.load_kw[t][0] == doctest::Approx(p.load_kw[t + 48][0]).epsilon(1e-12));
    CHECK(p.irradiance[t][0] == doctest::Approx(p.irradiance[t + 24][0]).epsilon(1e-12));
    CHECK(p.wholesale_price[t] == doctest::Approx(p.wholesale_price[t + 48]).epsilon(1e-12));
  }
  CHECK(p.irradiance[0][0] == 0.0);
  CHECK(p.irradiance[23][0] == 0.0);
  CHECK(p.irradiance[12][0] > 0.5);

  SyntheticSpec month;
  month.mgs = 2;
  month.days = 30;
  month.load_mean_kw = {400.0};
  const auto m = generate_synthetic(month, 99);
  for (int n = 0; n < 2; ++n) {
    double sum = 0.0;
    for (int t = 0; t < m.steps(); ++t) sum += m.load_kw[t][n];
    CHECK(std::abs(sum / m.steps() - 400.0) < 0.01 * 400.0);
  }
  CHECK(format_profile(generate_synthetic(month, 99)) == format_profile(m));

  SyntheticSpec bad;
  bad.dt_h = 0.7;
  CHECK_THROWS_AS(generate_synthetic(bad, 1), ValidationError);
  bad = {};
  bad.load_mean_kw = {1.0, 2.0, 3.0};
  CHECK_THROWS_AS(generate_synthetic(bad, 1), ValidationError);
}

TEST_CASE("experiment config") {
  const auto c = load_config(oracle::data("desk_shock.cfg"));
  CHECK(c.microgrids.size() == 2);
  CHECK(c.microgrids[1].feeder_bus == 33);
  CHECK(c.window == 2);
  REQUIRE(c.overrides.size() == 1);
  CHECK(c.overrides[0].episode == 250);
  CHECK(c.overrides[0].path == "*.dg.fuel_price");

  const auto text = format_config(c);
  const auto back = parse_config(text, "<rt>", c.base_dir);
  CHECK(format_config(back) == text);
  CHECK(back.entries() == c.entries());
  CHECK(config_hash(back) == config_hash(c));
  CHECK(config_hash(c).size() == 16);

  auto d = c;
  d.set("phi", "0.1");
  CHECK(d.phi == 0.1);
  CHECK(config_hash(d) != config_hash(c));
  d.set("fixed_window", "true");
  CHECK(d.fixed_window);

  CHECK(error_of([&] { d.set("phi_typo", "1"); }).find("phi_typo") != std::string::npos);
  CHECK(error_of([&] { d.set("episodes", "many"); }).find("episodes") != std::string::npos);
  CHECK_THROWS_AS(d.set("episodes", "2.5"), ValidationError);
  CHECK_THROWS_AS(d.set("fixed_window", "maybe"), ValidationError);
  CHECK_THROWS_AS(d.set("seed", "-1"), ValidationError);

  auto e = c;
  e.phi = 1.0;
  CHECK(error_of([&] { e.validate(); }).find("phi") != std::string::npos);
  e = c;
  e.price_min = 0.6;
  CHECK_THROWS_AS(e.validate(), ValidationError);

  CHECK(error_of([] { parse_config("schema_version = 1\nwindoww = 3\n", "x.cfg"); }).find("windoww") !=
        std::string::npos);
  CHECK_THROWS_AS(parse_config("schema_version = 1\n[nonsense]\n"), ValidationError);
  CHECK_THROWS_AS(load_config("/nonexistent/x.cfg"), IoError);
}

TEST_CASE("episode log and manifest") {
  CHECK(format_log({}, 2) == log_header(2) + "\n");
  CHECK(parse_log(format_log({}, 2)).empty());

  std::vector<LogRow> rows;
  for (int e = 0; e < 5; ++e) {
    rows.push_back({e, 1.0 / (e + 3), -2.0 * e, 0.1 * e, {0.1, 0.5}, {-123.456789, 1e-7}, 42.0 + e, -1.0 / 7.0});
  }
  const auto text = format_log(rows, 2);
  CHECK(parse_log(text) == rows);
  CHECK(text.substr(0, text.find('\n')) ==
        "episode,reward,q_hat,ape,price_mg_1,price_mg_2,pcc_kw_mg_1,pcc_kw_mg_2,p_w_kw,welfare");
  CHECK_THROWS_AS(format_log({rows[0]}, 3), ValidationError);

  const auto dir = temp_dir("gridcoop_results");
  Manifest m;
  m.command = "train";
  m.config = load_config(oracle::data("desk.cfg"));
  m.seed = 5;
  m.metrics["episodes_run"] = 5;
  persist_results(rows, 2, m, dir);
  CHECK(parse_log(slurp(dir + "/episodes.csv")) == rows);
  const auto j = nlohmann::json::parse(slurp(dir + "/manifest.json"));
  CHECK(j["config_hash"] == config_hash(m.config));
  CHECK(j["seed"] == 5);
  CHECK(j["code_version"] == code_version());
  CHECK(j["outputs"]["episodes"] == "episodes.csv");
  CHECK(j["config"]["microgrids"].size() == 2);
  CHECK(j["config_text"] == format_config(m.config));
  std::filesystem::remove_all(dir);

  persist_results({}, 2, m, dir);
  CHECK(slurp(dir + "/episodes.csv") == log_header(2) + "\n");
  std::filesystem::remove_all(dir);
}
