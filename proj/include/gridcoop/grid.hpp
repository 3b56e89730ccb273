#pragma once

// Balanced single-phase-equivalent network model and polar Newton-Raphson
// power flow. Everything inside is per-unit on the network's base_kva.

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace gridcoop::grid {

enum class BusType { slack, pq };

struct Bus {
  int id = 0;
  BusType type = BusType::pq;
  double v_min = 0.95;
  double v_max = 1.05;
  // Fixed background demand attached to the bus, physical units.
  double load_kw = 0.0;
  double load_kvar = 0.0;
};

struct Branch {
  int from = 0;
  int to = 0;
  double r = 0.0;       // pu
  double x = 0.0;       // pu
  double rating = 1.0;  // pu apparent power
};

struct NetworkModel {
  std::string name;
  double base_kva = 1000.0;
  double base_kv = 1.0;
  std::vector<Bus> buses;
  std::vector<Branch> branches;

  std::size_t size() const noexcept { return buses.size(); }
  /// Position of bus `id` in `buses`; throws ValidationError if absent.
  std::size_t index_of(int id) const;
  std::size_t slack_index() const;
  /// Checks every structural invariant (one slack, connected, positive
  /// impedances and limits). Throws ValidationError.
  void validate() const;
};

/// A network with a single slack bus and no branches.
NetworkModel single_bus_network(std::string name, double base_kva, double v_min = 0.9,
                                double v_max = 1.1);

struct AdmittanceMatrix {
  Eigen::MatrixXd g;
  Eigen::MatrixXd b;
};

/// Series admittance (g, b) of one branch: 1 / (r + jx).
struct SeriesAdmittance {
  double g;
  double b;
};
SeriesAdmittance series_admittance(const Branch& branch) noexcept;

AdmittanceMatrix build_admittance(const NetworkModel& network);

struct BusState {
  std::vector<double> v;
  std::vector<double> theta;
};

/// Net injections into each bus, per-unit, positive = into the bus.
struct InjectionSet {
  std::vector<double> p;
  std::vector<double> q;
};

/// Injections of the fixed background loads, scaled by `scale`.
InjectionSet background_injections(const NetworkModel& network, double scale = 1.0);

struct PowerFlowOptions {
  double tolerance = 1e-8;
  int max_iterations = 30;
};

struct PowerFlowResult {
  BusState state;
  double slack_p = 0.0;  // computed injection at the slack bus
  double slack_q = 0.0;
  int iterations = 0;
  double max_mismatch = 0.0;
};

PowerFlowResult solve_power_flow(const NetworkModel& network, const InjectionSet& injections,
                                 double slack_voltage, const PowerFlowOptions& options = {});
PowerFlowResult solve_power_flow(const NetworkModel& network, const AdmittanceMatrix& y,
                                 const InjectionSet& injections, double slack_voltage,
                                 const PowerFlowOptions& options = {});

/// Bus injections implied by a voltage state: P_i, Q_i.
InjectionSet computed_injections(const AdmittanceMatrix& y, const BusState& state);

/// Full sensitivity of the bus injections to angles and magnitudes
/// (all buses, including the slack).
struct InjectionJacobian {
  Eigen::MatrixXd dp_dtheta;
  Eigen::MatrixXd dp_dv;
  Eigen::MatrixXd dq_dtheta;
  Eigen::MatrixXd dq_dv;
};
InjectionJacobian injection_jacobian(const AdmittanceMatrix& y, const BusState& state);

struct BranchFlow {
  double p_from = 0.0;  // P^{ij}, leaving `from` towards `to`
  double q_from = 0.0;
  double p_to = 0.0;    // P^{ji}
  double q_to = 0.0;
  double loss_p() const noexcept { return p_from + p_to; }
  double loss_q() const noexcept { return q_from + q_to; }
};

/// Flow leaving bus i towards bus j over one series branch, polar form.
BranchFlow branch_flow(const Branch& branch, double vi, double ti, double vj, double tj) noexcept;

std::vector<BranchFlow> line_flows(const NetworkModel& network, const BusState& state);

double total_losses(const std::vector<BranchFlow>& flows) noexcept;

// Network description file. See data/README for the schema.
NetworkModel parse_network(const std::string& text, const std::string& origin = "<string>");
NetworkModel load_network(const std::string& path);
std::string format_network(const NetworkModel& network);

}  // namespace gridcoop::grid
