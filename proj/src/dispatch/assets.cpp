#include <cmath>

#include <fmt/format.h>

#include "gridcoop/dispatch.hpp"
#include "gridcoop/errors.hpp"
#include "gridcoop/text.hpp"

namespace gridcoop::dispatch {

namespace {

void require(bool cond, const std::string& who, const std::string& what) {
  if (!cond) throw ValidationError(who + ": " + what);
}

}  // namespace

void MgAssets::validate() const {
  network.validate();
  const std::string who = "microgrid '" + name + "'";
  require(network.buses[network.slack_index()].id == pcc_bus, who, "PCC bus must be the network slack bus");
  require(pcc_p_max_kw >= 0.0 && pcc_q_max_kvar >= 0.0, who, "PCC limits must be >= 0");
  for (const auto& dg : dgs) {
    network.index_of(dg.bus);
    require(dg.p_max_kw >= 0.0 && dg.q_max_kvar >= 0.0 && dg.ramp_kw >= 0.0, who, "DG limits must be >= 0");
    require(dg.a_f >= 0.0 && dg.b_f >= 0.0 && dg.c_f >= 0.0, who, "fuel coefficients must be >= 0");
    require(dg.fuel_price >= 0.0, who, "fuel price must be >= 0");
  }
  for (const auto& e : ess) {
    network.index_of(e.bus);
    require(e.capacity_kwh > 0.0, who, "ESS capacity must be > 0");
    require(0.0 <= e.soc_min && e.soc_min < e.soc_max && e.soc_max <= 1.0, who, "need 0 <= SOC_min < SOC_max <= 1");
    require(e.eta_ch > 0.0 && e.eta_ch <= 1.0 && e.eta_dis > 0.0 && e.eta_dis <= 1.0, who,
            "efficiencies must lie in (0, 1]");
    require(e.p_ch_max_kw >= 0.0 && e.p_dis_max_kw >= 0.0 && e.q_max_kvar >= 0.0, who, "ESS limits must be >= 0");
    require(e.soc_init >= e.soc_min - 1e-12 && e.soc_init <= e.soc_max + 1e-12, who,
            "initial SOC outside SOC bounds");
  }
  for (const auto& pv : pvs) {
    network.index_of(pv.bus);
    require(pv.rated_kw >= 0.0 && pv.q_max_kvar >= 0.0, who, "PV limits must be >= 0");
  }
  double share = 0.0;
  for (const auto& l : loads) {
    network.index_of(l.bus);
    require(l.share >= 0.0, who, "load shares must be >= 0");
    share += l.share;
  }
  require(loads.empty() || std::abs(share - 1.0) < 1e-6, who, "load shares must sum to 1");
}

MgAssets parse_assets(const std::string& content, const std::string& origin, const std::string& base_dir) {
  const auto doc = text::parse(content, origin);
  doc.require_schema(1);
  MgAssets mg;
  mg.name = doc.str_or("name", "mg");
  const auto net = doc.str("network");
  if (net == "single-bus") {
    mg.network = grid::single_bus_network(mg.name, doc.number("base_kva"), doc.number_or("v_min", 0.9),
                                          doc.number_or("v_max", 1.1));
  } else {
    mg.network = grid::load_network(text::resolve(base_dir, net));
  }
  mg.pcc_bus = static_cast<int>(doc.number_or("pcc_bus", mg.network.buses[mg.network.slack_index()].id));
  mg.pcc_p_max_kw = doc.number_or("pcc_p_max_kw", 1e6);
  mg.pcc_q_max_kvar = doc.number_or("pcc_q_max_kvar", 1e6);

  auto cells = [&](const text::Row& row, std::size_t expected, const char* layout) {
    const auto loc = fmt::format("{}:{}", origin, row.line);
    if (row.cells.size() != expected) throw ValidationError(loc + ": expected '" + layout + "'");
    std::vector<double> v;
    for (const auto& c : row.cells) v.push_back(text::to_double(c, loc));
    return v;
  };
  for (const auto& row : doc.section("dg")) {
    const auto v = cells(row, 8, "bus p_max_kw q_max_kvar ramp_kw a_f b_f c_f fuel_price");
    mg.dgs.push_back(DgUnit{static_cast<int>(v[0]), v[1], v[2], v[3], v[4], v[5], v[6], v[7]});
  }
  for (const auto& row : doc.section("ess")) {
    const auto v = cells(row, 10,
                         "bus capacity_kwh soc_min soc_max p_ch_max_kw p_dis_max_kw eta_ch eta_dis q_max_kvar soc_init");
    mg.ess.push_back(EssUnit{static_cast<int>(v[0]), v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8], v[9]});
  }
  for (const auto& row : doc.section("pv")) {
    const auto v = cells(row, 3, "bus rated_kw q_max_kvar");
    mg.pvs.push_back(PvUnit{static_cast<int>(v[0]), v[1], v[2]});
  }
  for (const auto& row : doc.section("loads")) {
    const auto v = cells(row, 3, "bus share q_ratio");
    mg.loads.push_back(LoadShare{static_cast<int>(v[0]), v[1], v[2]});
  }
  if (mg.loads.empty()) mg.loads.push_back(LoadShare{mg.pcc_bus, 1.0, doc.number_or("load_q_ratio", 0.0)});
  try {
    mg.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(origin + ": " + e.what());
  }
  return mg;
}

MgAssets load_assets(const std::string& path) {
  return parse_assets(text::read_file(path), path, text::dirname(path));
}

void DispatchProblem::validate(const MgAssets& assets) const {
  const auto t = static_cast<std::size_t>(steps);
  require(steps >= 1, "dispatch problem", "needs at least one step");
  require(dt_h > 0.0, "dispatch problem", "step duration must be positive");
  require(retail_price.size() == t, "dispatch problem", "price series length must equal the window length");
  require(pcc_voltage.size() == t, "dispatch problem", "PCC voltage series length must equal the window length");
  require(load_kw.size() == t && load_kvar.size() == t && pv_kw.size() == t, "dispatch problem",
          "load/PV series length must equal the window length");
  for (std::size_t k = 0; k < t; ++k) {
    require(load_kw[k].size() == assets.network.size() && load_kvar[k].size() == assets.network.size(),
            "dispatch problem", "load vectors must cover every MG bus");
    require(pv_kw[k].size() == assets.pvs.size(), "dispatch problem", "PV vectors must cover every PV unit");
    for (double v : load_kw[k]) require(v >= 0.0, "dispatch problem", "load estimates must be >= 0");
    for (double v : pv_kw[k]) require(v >= 0.0, "dispatch problem", "PV estimates must be >= 0");
    require(pcc_voltage[k] > 0.5 && pcc_voltage[k] < 1.5, "dispatch problem", "PCC voltage estimate out of range");
    require(std::isfinite(retail_price[k]), "dispatch problem", "retail price must be finite");
  }
  require(soc_init.empty() || soc_init.size() == assets.ess.size(), "dispatch problem", "one initial SOC per ESS");
  require(dg_prev_kw.empty() || dg_prev_kw.size() == assets.dgs.size(), "dispatch problem",
          "one previous output per DG");
}

DispatchProblem make_problem(const MgAssets& assets, std::vector<double> retail_price,
                             const std::vector<double>& aggregate_load_kw, const std::vector<double>& irradiance,
                             double dt_h, std::vector<double> pcc_voltage) {
  DispatchProblem p;
  p.steps = static_cast<int>(retail_price.size());
  p.dt_h = dt_h;
  p.retail_price = std::move(retail_price);
  p.pcc_voltage = pcc_voltage.empty() ? std::vector<double>(p.retail_price.size(), 1.0) : std::move(pcc_voltage);
  if (aggregate_load_kw.size() != p.retail_price.size() || irradiance.size() != p.retail_price.size()) {
    throw ValidationError("make_problem: load and irradiance series must match the price series");
  }
  const auto nb = assets.network.size();
  const auto shares = assets.loads.empty() ? std::vector<LoadShare>{LoadShare{assets.pcc_bus, 1.0, 0.0}} : assets.loads;
  for (std::size_t t = 0; t < p.retail_price.size(); ++t) {
    std::vector<double> lp(nb, 0.0);
    std::vector<double> lq(nb, 0.0);
    for (const auto& l : shares) {
      const auto i = assets.network.index_of(l.bus);
      lp[i] += l.share * aggregate_load_kw[t];
      lq[i] += l.share * aggregate_load_kw[t] * l.q_ratio;
    }
    std::vector<double> pv;
    for (const auto& u : assets.pvs) pv.push_back(u.rated_kw * irradiance[t]);
    p.load_kw.push_back(std::move(lp));
    p.load_kvar.push_back(std::move(lq));
    p.pv_kw.push_back(std::move(pv));
  }
  return p;
}

double fuel_cost(double p_kw, const DgUnit& dg) {
  if (p_kw < 0.0) throw ValidationError(fmt::format("fuel_cost: negative DG output {}", p_kw));
  return dg.a_f * p_kw * p_kw + dg.b_f * p_kw + dg.c_f;
}

double fuel_cost_committed(double p_kw, const DgUnit& dg) { return p_kw > 0.0 ? fuel_cost(p_kw, dg) : 0.0; }

double soc_step(double soc_prev, double p_ch_kw, double p_dis_kw, const EssUnit& ess, double dt_h) {
  return soc_prev + dt_h * (p_ch_kw * ess.eta_ch - p_dis_kw / ess.eta_dis) / ess.capacity_kwh;
}

double dispatch_objective(const DispatchProblem& problem, const MgAssets& assets, const DispatchSolution& solution) {
  double total = 0.0;
  for (int t = 0; t < problem.steps; ++t) {
    const auto& s = solution.steps[t];
    double step = -problem.retail_price[t] * s.pcc_p;
    for (std::size_t g = 0; g < assets.dgs.size(); ++g) {
      step += assets.dgs[g].fuel_price * fuel_cost_committed(s.dg_p[g], assets.dgs[g]);
    }
    total += problem.dt_h * step;
  }
  return total;
}

}  // namespace gridcoop::dispatch
