#pragma once

// Windowed optimal power management of one microgrid: fuel cost of the local
// generators against revenue at the point of common coupling (PCC), subject to
// AC power flow inside the microgrid, storage dynamics and device limits.
//
// Units: kW / kvar / kWh / $ at the interface, per-unit on the microgrid
// network base inside the solver. P^PCC >= 0 means export to the grid.

#include <optional>
#include <string>
#include <vector>

#include "gridcoop/grid.hpp"

namespace gridcoop::dispatch {

struct DgUnit {
  int bus = 1;
  double p_max_kw = 0.0;
  double q_max_kvar = 0.0;
  double ramp_kw = 0.0;  // per step
  double a_f = 0.0001773;  // L/kW^2
  double b_f = 0.1709;     // L/kW
  double c_f = 14.67;      // L
  double fuel_price = 1.0; // $/L
};

struct EssUnit {
  int bus = 1;
  double capacity_kwh = 0.0;
  double soc_min = 0.1;
  double soc_max = 0.9;
  double p_ch_max_kw = 0.0;
  double p_dis_max_kw = 0.0;
  double eta_ch = 0.95;
  double eta_dis = 0.95;
  double q_max_kvar = 0.0;
  double soc_init = 0.5;
};

struct PvUnit {
  int bus = 1;
  double rated_kw = 0.0;
  double q_max_kvar = 0.0;
};

/// Fraction of the aggregate MG load sitting at one bus, with its kvar/kW ratio.
struct LoadShare {
  int bus = 1;
  double share = 1.0;
  double q_ratio = 0.0;
};

struct MgAssets {
  std::string name;
  grid::NetworkModel network;
  int pcc_bus = 1;
  double pcc_p_max_kw = 1e6;
  double pcc_q_max_kvar = 1e6;
  std::vector<DgUnit> dgs;
  std::vector<EssUnit> ess;
  std::vector<PvUnit> pvs;
  std::vector<LoadShare> loads;

  void validate() const;
  double base_kva() const noexcept { return network.base_kva; }
};

MgAssets parse_assets(const std::string& content, const std::string& origin, const std::string& base_dir = "");
MgAssets load_assets(const std::string& path);

struct DispatchProblem {
  int steps = 1;
  double dt_h = 1.0;
  std::vector<double> retail_price;  // $/kWh per step
  std::vector<double> pcc_voltage;   // estimated PCC voltage per step, pu
  // Per step, per bus of the MG network (index order of network.buses).
  std::vector<std::vector<double>> load_kw;
  std::vector<std::vector<double>> load_kvar;
  // Per step, per PV unit.
  std::vector<std::vector<double>> pv_kw;
  // Per ESS; empty -> asset defaults.
  std::vector<double> soc_init;
  // Per DG output before the window; nullopt -> first step unconstrained by ramp.
  std::vector<std::optional<double>> dg_prev_kw;

  void validate(const MgAssets& assets) const;
};

/// Builds a problem from aggregate load (kW) and irradiance ([0,1]) series,
/// distributing the load over the asset's load shares.
DispatchProblem make_problem(const MgAssets& assets, std::vector<double> retail_price,
                             const std::vector<double>& aggregate_load_kw,
                             const std::vector<double>& irradiance, double dt_h = 1.0,
                             std::vector<double> pcc_voltage = {});

struct StepDispatch {
  std::vector<double> dg_p, dg_q;
  std::vector<double> ess_ch, ess_dis, ess_u_ch, ess_u_dis, ess_q, soc;
  std::vector<double> pv_q;
  double pcc_p = 0.0;  // kW, export positive
  double pcc_q = 0.0;  // kvar
};

struct DispatchSolution {
  std::vector<StepDispatch> steps;
  std::vector<grid::BusState> bus_states;
  double objective = 0.0;                   // $, window total
  std::vector<double> accepted_objectives;  // merit after each accepted SLP step
  int slp_iterations = 0;
  int mode_resolves = 0;
};

struct DispatchOptions {
  double feas_tol = 1e-4;
  double slp_tol = 1e-5;
  int max_outer = 50;
  double trust_radius = 0.1;  // pu
  int fuel_segments = 10;
  int branch_facets = 8;
  int max_commitment_patterns = 16;
  grid::PowerFlowOptions power_flow{};
};

/// Liters per hour at output p_kw. Throws ValidationError for negative input.
double fuel_cost(double p_kw, const DgUnit& dg);
/// Same, with the idle convention: zero when the unit is off (p_kw == 0).
double fuel_cost_committed(double p_kw, const DgUnit& dg);

double soc_step(double soc_prev, double p_ch_kw, double p_dis_kw, const EssUnit& ess, double dt_h);

/// Objective of a dispatch (window total, $) under the idle-cost convention.
double dispatch_objective(const DispatchProblem& problem, const MgAssets& assets,
                          const DispatchSolution& solution);

DispatchSolution solve_dispatch(const DispatchProblem& problem, const MgAssets& assets,
                                const DispatchOptions& options = {});

/// Maps simultaneous charge/discharge to pure net charge or discharge and
/// re-propagates SOC. If that breaks an SOC bound, the offending step's mode
/// is pinned and the window re-solved.
DispatchSolution repair_complementarity(const DispatchSolution& relaxed, const DispatchProblem& problem,
                                        const MgAssets& assets, const DispatchOptions& options = {});

// Independent re-evaluation of every dispatch constraint on a solution.
struct Violation {
  std::string family;
  std::string detail;
  double amount = 0.0;
};

struct AuditReport {
  std::vector<Violation> violations;
  double max_violation = 0.0;
  bool ok() const noexcept { return violations.empty(); }
};

AuditReport audit_dispatch(const DispatchProblem& problem, const MgAssets& assets,
                           const DispatchSolution& solution, double tol = 1e-4);

}  // namespace gridcoop::dispatch
