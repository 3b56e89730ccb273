#include <doctest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "gridcoop/grid.hpp"
#include "gridcoop/scenario.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string output;
};

Run cli(const std::string& args) {
  const std::string cmd = std::string(GRIDCOOP_CLI) + " " + args + " 2>&1";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buf{};
  while (fgets(buf.data(), buf.size(), pipe) != nullptr) r.output += buf.data();
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("gridcoop_cli_" + name);
  fs::remove_all(p);
  return p;
}

std::string desk_cfg() { return oracle::data("desk.cfg"); }

std::vector<std::vector<std::string>> rows_of(const std::string& csv) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(csv);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string c;
    while (std::getline(ls, c, ',')) cells.push_back(c);
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST_CASE("help documents every flag") {
  const std::map<std::string, std::vector<std::string>> flags{
      {"train", {"--checkpoint"}},
      {"evaluate", {"--checkpoint"}},
      {"oracle", {"--checkpoint", "--max-evaluations"}},
      {"powerflow", {"--network", "--injections", "--slack-v", "--load-scale"}},
      {"dispatch", {"--assets", "--prices", "--load", "--irradiance", "--soc", "--pcc-voltage", "--dt"}},
      {"report-data", {"--in", "--window"}},
  };
  const auto top = cli("--help");
  CHECK(top.code == 0);
  for (const auto& [sub, extra] : flags) {
    CHECK(top.output.find(sub) != std::string::npos);
    const auto h = cli(sub + " --help");
    CHECK(h.code == 0);
    for (const char* common : {"--config", "--seed", "--out", "--set"}) {
      CHECK_MESSAGE(h.output.find(common) != std::string::npos, sub << " " << common);
    }
    for (const auto& f : extra) CHECK_MESSAGE(h.output.find(f) != std::string::npos, sub << " " << f);
  }
}

TEST_CASE("exit codes") {
  const auto out = scratch("codes");
  CHECK(cli("train --config " + desk_cfg() + " --set bogus=1 --out " + out.string()).code == 1);
  CHECK(cli("train --config " + desk_cfg() + " --set episodes=x --out " + out.string()).code == 1);
  CHECK(cli("train --config " + desk_cfg() + " --set episodes --out " + out.string()).code == 1);
  CHECK(cli("train --no-such-flag").code == 1);
  CHECK(cli("train --config /nonexistent/desk.cfg").code == 3);
  CHECK(cli("evaluate --config " + desk_cfg() + " --checkpoint /nonexistent/model.ckpt").code == 3);

  const auto guard = cli("oracle --config " + desk_cfg() + " --set oracle_grid=40 --out " + out.string());
  CHECK(guard.code == 1);
  CHECK(guard.output.find("coarser") != std::string::npos);

  const auto pf = cli("powerflow --config " + desk_cfg() + " --load-scale 30 --out " + out.string());
  CHECK(pf.code == 2);
  CHECK(pf.output.find("converge") != std::string::npos);
  fs::remove_all(out);
}

TEST_CASE("powerflow subcommand") {
  const auto out = scratch("pf");
  const auto flat = cli("powerflow --config " + desk_cfg() + " --load-scale 0 --out " + out.string());
  REQUIRE(flat.code == 0);
  const auto rows = rows_of(slurp(out / "powerflow.csv"));
  REQUIRE(rows.size() == 34);
  CHECK(rows[0] == std::vector<std::string>{"bus", "v_pu", "theta_rad"});
  for (std::size_t k = 1; k < rows.size(); ++k) {
    CHECK(std::stod(rows[k][1]) == 1.0);
    CHECK(std::stod(rows[k][2]) == 0.0);
  }

  // extra injections only, against the sweep
  {
    std::ofstream inj(out / "inj.csv");
    inj << "bus,p_kw,q_kvar\n18,-300,-100\n33,-250,-80\n";
  }
  const auto r = cli("powerflow --config " + desk_cfg() + " --load-scale 0 --injections " + (out / "inj.csv").string() +
                     " --out " + out.string());
  REQUIRE(r.code == 0);
  const auto net = gridcoop::grid::load_network(oracle::data("feeder33.net"));
  gridcoop::grid::InjectionSet set{std::vector<double>(net.size(), 0.0), std::vector<double>(net.size(), 0.0)};
  set.p[net.index_of(18)] = -0.3 * 1000.0 / net.base_kva;
  set.q[net.index_of(18)] = -0.1 * 1000.0 / net.base_kva;
  set.p[net.index_of(33)] = -0.25 * 1000.0 / net.base_kva;
  set.q[net.index_of(33)] = -0.08 * 1000.0 / net.base_kva;
  const auto v = oracle::sweep(net, set, 1.0);
  const auto got = rows_of(slurp(out / "powerflow.csv"));
  for (std::size_t k = 1; k < got.size(); ++k) {
    const auto i = net.index_of(std::stoi(got[k][0]));
    CHECK(std::abs(std::stod(got[k][1]) - std::abs(v[i])) < 1e-6);
  }
  fs::remove_all(out);
}

TEST_CASE("dispatch subcommand") {
  const auto out = scratch("dispatch");
  const auto r = cli("dispatch --assets " + oracle::data("desk_a.mg") +
                     " --prices 0.1,0.5 --load 150 --irradiance 0,0.8 --out " + out.string());
  REQUIRE(r.code == 0);
  const auto rows = rows_of(slurp(out / "dispatch.csv"));
  CHECK(rows.size() >= 3);
  CHECK(cli("dispatch --assets " + oracle::data("desk_a.mg") + " --prices 0.1,0.5 --load -5").code == 1);
  fs::remove_all(out);
}

TEST_CASE("train, evaluate, oracle and report-data on the desk scenario") {
  const auto a = scratch("train_a");
  const auto b = scratch("train_b");
  const std::string common = "train --config " + desk_cfg() + " --seed 9 --set episodes=40 --set phi=0.05 --out ";
  REQUIRE(cli(common + a.string()).code == 0);
  REQUIRE(cli(common + b.string()).code == 0);
  CHECK(slurp(a / "episodes.csv") == slurp(b / "episodes.csv"));
  CHECK(slurp(a / "model.ckpt") == slurp(b / "model.ckpt"));
  CHECK(gridcoop::scenario::parse_log(slurp(a / "episodes.csv")).size() == 40);

  // manifest echoes the effective configuration
  const auto m = nlohmann::json::parse(slurp(a / "manifest.json"));
  CHECK(m["seed"] == 9);
  CHECK(m["config"]["phi"] == "0.05");
  CHECK(m["config"]["episodes"] == "40");
  auto effective = gridcoop::scenario::load_config(desk_cfg());
  effective.set("phi", "0.05");
  effective.set("episodes", "40");
  effective.seed = 9;
  CHECK(m["config_hash"] == gridcoop::scenario::config_hash(effective));
  CHECK(m["metrics"]["episodes_run"] == 40);

  const auto other = scratch("train_c");
  REQUIRE(cli("train --config " + desk_cfg() + " --seed 10 --set episodes=40 --set phi=0.05 --out " + other.string())
              .code == 0);
  CHECK(slurp(other / "episodes.csv") != slurp(a / "episodes.csv"));

  const auto ev = cli("evaluate --config " + desk_cfg() + " --checkpoint " + (a / "model.ckpt").string() + " --out " +
                      a.string());
  REQUIRE(ev.code == 0);
  const auto eval_rows = rows_of(slurp(a / "evaluation.csv"));
  REQUIRE(eval_rows.size() == 5);
  CHECK(eval_rows[0] == std::vector<std::string>{"mg", "step", "price", "pcc_kw", "pcc_kvar", "v_pcc"});

  const auto orc = cli("oracle --config " + desk_cfg() + " --set oracle_grid=3 --checkpoint " +
                       (a / "model.ckpt").string() + " --out " + a.string());
  CHECK(orc.code == 0);
  const auto cmp = rows_of(slurp(a / "comparison.csv"));
  REQUIRE(cmp.size() == 3);
  CHECK(cmp[0] == std::vector<std::string>{"method", "welfare", "seconds", "evaluations", "prices"});
  CHECK(cmp[1][0] == "oracle");
  CHECK(cmp[1][3] == "81");
  CHECK(cmp[2][0] == "rl");

  // warm start continues from the checkpoint
  const auto warm = scratch("train_warm");
  CHECK(cli("train --config " + desk_cfg() + " --set episodes=5 --checkpoint " + (a / "model.ckpt").string() +
            " --out " + warm.string())
            .code == 0);

  const auto rep = cli("report-data --in " + (a / "episodes.csv").string() + " --window 10 --out " + a.string());
  REQUIRE(rep.code == 0);
  CHECK(fs::exists(a / "summary.csv"));
  for (const auto& p : {a, b, other, warm}) fs::remove_all(p);
}

TEST_CASE("shock scenario log carries the spike") {
  const auto out = scratch("shock");
  REQUIRE(cli("train --config " + oracle::data("desk_shock.cfg") + " --set episodes=300 --out " + out.string()).code ==
          0);
  REQUIRE(cli("report-data --in " + (out / "episodes.csv").string() + " --window 10 --out " + out.string()).code == 0);
  const auto rows = rows_of(slurp(out / (out.filename().string() + "_episodes_mape.csv")));
  REQUIRE(rows.size() == 301);
  const auto& header = rows[0];
  const auto col = std::find(header.begin(), header.end(), "mape") - header.begin();
  REQUIRE(col < static_cast<long>(header.size()));
  const auto ape_col = std::find(header.begin(), header.end(), "ape") - header.begin();
  double before = 0.0;
  double after = 0.0;
  for (int e = 200; e < 250; ++e) before += std::stod(rows[e + 1][ape_col]) / 50.0;
  for (int e = 250; e < 300; ++e) after = std::max(after, std::stod(rows[e + 1][col]));
  MESSAGE("mean APE before the shock " << before << ", trailing-10 MAPE peak after " << after);
  CHECK(after > 3.0 * before);
  fs::remove_all(out);
}
