#include <cmath>
#include <queue>

#include <fmt/format.h>

#include "gridcoop/errors.hpp"
#include "gridcoop/grid.hpp"

namespace gridcoop::grid {

std::size_t NetworkModel::index_of(int id) const {
  for (std::size_t i = 0; i < buses.size(); ++i) {
    if (buses[i].id == id) return i;
  }
  throw ValidationError(fmt::format("network '{}': unknown bus {}", name, id));
}

std::size_t NetworkModel::slack_index() const {
  for (std::size_t i = 0; i < buses.size(); ++i) {
    if (buses[i].type == BusType::slack) return i;
  }
  throw ValidationError(fmt::format("network '{}': no slack bus", name));
}

void NetworkModel::validate() const {
  if (buses.empty()) throw ValidationError(fmt::format("network '{}': no buses", name));
  if (!(base_kva > 0.0) || !(base_kv > 0.0)) {
    throw ValidationError(fmt::format("network '{}': base quantities must be positive", name));
  }
  int slacks = 0;
  for (std::size_t i = 0; i < buses.size(); ++i) {
    const auto& b = buses[i];
    if (b.type == BusType::slack) ++slacks;
    if (!(b.v_min > 0.0) || !(b.v_max > b.v_min)) {
      throw ValidationError(fmt::format("network '{}': bus {} has invalid voltage limits", name, b.id));
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (buses[j].id == b.id) throw ValidationError(fmt::format("network '{}': duplicate bus {}", name, b.id));
    }
  }
  if (slacks != 1) {
    throw ValidationError(fmt::format("network '{}': expected exactly one slack bus, found {}", name, slacks));
  }
  std::vector<std::vector<std::size_t>> adjacency(buses.size());
  for (const auto& br : branches) {
    const auto f = index_of(br.from);
    const auto t = index_of(br.to);
    if (f == t) throw ValidationError(fmt::format("network '{}': branch {}-{} is a self loop", name, br.from, br.to));
    if (!(std::hypot(br.r, br.x) > 0.0) || br.r < 0.0) {
      throw ValidationError(fmt::format("network '{}': branch {}-{} needs r >= 0 and |z| > 0", name, br.from, br.to));
    }
    if (!(br.rating > 0.0)) {
      throw ValidationError(fmt::format("network '{}': branch {}-{} needs a positive rating", name, br.from, br.to));
    }
    adjacency[f].push_back(t);
    adjacency[t].push_back(f);
  }
  std::vector<bool> seen(buses.size(), false);
  std::queue<std::size_t> frontier;
  frontier.push(0);
  seen[0] = true;
  std::size_t reached = 1;
  while (!frontier.empty()) {
    const auto u = frontier.front();
    frontier.pop();
    for (auto v : adjacency[u]) {
      if (!seen[v]) {
        seen[v] = true;
        ++reached;
        frontier.push(v);
      }
    }
  }
  if (reached != buses.size()) {
    throw ValidationError(fmt::format("network '{}': disconnected ({} of {} buses reachable)", name, reached,
                                      buses.size()));
  }
}

NetworkModel single_bus_network(std::string name, double base_kva, double v_min, double v_max) {
  NetworkModel net;
  net.name = std::move(name);
  net.base_kva = base_kva;
  net.buses.push_back(Bus{1, BusType::slack, v_min, v_max, 0.0, 0.0});
  return net;
}

SeriesAdmittance series_admittance(const Branch& branch) noexcept {
  const double d = branch.r * branch.r + branch.x * branch.x;
  return {branch.r / d, -branch.x / d};
}

AdmittanceMatrix build_admittance(const NetworkModel& network) {
  network.validate();
  const auto n = static_cast<Eigen::Index>(network.size());
  AdmittanceMatrix y{Eigen::MatrixXd::Zero(n, n), Eigen::MatrixXd::Zero(n, n)};
  for (const auto& br : network.branches) {
    const auto i = static_cast<Eigen::Index>(network.index_of(br.from));
    const auto j = static_cast<Eigen::Index>(network.index_of(br.to));
    const auto [g, b] = series_admittance(br);
    y.g(i, i) += g;
    y.g(j, j) += g;
    y.g(i, j) -= g;
    y.g(j, i) -= g;
    y.b(i, i) += b;
    y.b(j, j) += b;
    y.b(i, j) -= b;
    y.b(j, i) -= b;
  }
  return y;
}

InjectionSet background_injections(const NetworkModel& network, double scale) {
  InjectionSet inj{std::vector<double>(network.size(), 0.0), std::vector<double>(network.size(), 0.0)};
  for (std::size_t i = 0; i < network.size(); ++i) {
    inj.p[i] = -scale * network.buses[i].load_kw / network.base_kva;
    inj.q[i] = -scale * network.buses[i].load_kvar / network.base_kva;
  }
  return inj;
}

BranchFlow branch_flow(const Branch& branch, double vi, double ti, double vj, double tj) noexcept {
  const auto [g, b] = series_admittance(branch);
  const double dij = ti - tj;
  const double c = std::cos(dij);
  const double s = std::sin(dij);
  BranchFlow f;
  f.p_from = vi * (vi * g - vj * (g * c + b * s));
  f.q_from = -vi * (vi * b + vj * (g * s - b * c));
  // Reverse direction: swap roles, angle difference changes sign.
  f.p_to = vj * (vj * g - vi * (g * c - b * s));
  f.q_to = -vj * (vj * b + vi * (-g * s - b * c));
  return f;
}

std::vector<BranchFlow> line_flows(const NetworkModel& network, const BusState& state) {
  if (state.v.size() != network.size() || state.theta.size() != network.size()) {
    throw ValidationError("line_flows: state dimension does not match network");
  }
  std::vector<BranchFlow> flows;
  flows.reserve(network.branches.size());
  for (const auto& br : network.branches) {
    const auto i = network.index_of(br.from);
    const auto j = network.index_of(br.to);
    flows.push_back(branch_flow(br, state.v[i], state.theta[i], state.v[j], state.theta[j]));
  }
  return flows;
}

double total_losses(const std::vector<BranchFlow>& flows) noexcept {
  double loss = 0.0;
  for (const auto& f : flows) loss += f.loss_p();
  return loss;
}

}  // namespace gridcoop::grid
