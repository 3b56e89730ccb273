#include <cmath>

#include <fmt/format.h>

#include "gridcoop/dispatch.hpp"
#include "gridcoop/errors.hpp"

namespace gridcoop::dispatch {

// Every check is recomputed from the raw solution fields; nothing is taken
// from the solver's internal bookkeeping.
AuditReport audit_dispatch(const DispatchProblem& problem, const MgAssets& assets,
                           const DispatchSolution& solution, double tol) {
  AuditReport report;
  const auto& net = assets.network;
  const double base = net.base_kva;
  const auto T = static_cast<std::size_t>(problem.steps);
  const std::size_t nb = net.size();
  const std::size_t slack = net.slack_index();

  auto check = [&](const std::string& family, double amount, const std::string& detail, double limit) {
    if (!std::isfinite(amount)) amount = std::numeric_limits<double>::infinity();
    report.max_violation = std::max(report.max_violation, amount);
    if (amount > limit) report.violations.push_back({family, detail, amount});
  };

  if (solution.steps.size() != T || solution.bus_states.size() != T) {
    check("shape", std::numeric_limits<double>::infinity(), "solution length does not match the window", tol);
    return report;
  }

  std::vector<double> soc(assets.ess.size());
  for (std::size_t e = 0; e < assets.ess.size(); ++e) {
    soc[e] = problem.soc_init.empty() ? assets.ess[e].soc_init : problem.soc_init[e];
  }

  for (std::size_t t = 0; t < T; ++t) {
    const auto& d = solution.steps[t];
    const auto& st = solution.bus_states[t];
    const auto where = [&](const std::string& what) { return fmt::format("step {} {}", t, what); };

    check("pcc_active_limit", (std::abs(d.pcc_p) - assets.pcc_p_max_kw) / base, where("|P_pcc|"), tol);
    check("pcc_reactive_limit", (std::abs(d.pcc_q) - assets.pcc_q_max_kvar) / base, where("|Q_pcc|"), tol);

    for (std::size_t g = 0; g < assets.dgs.size(); ++g) {
      const auto& dg = assets.dgs[g];
      const auto id = fmt::format("dg {}", g);
      check("dg_active_limit", std::max(-d.dg_p[g], d.dg_p[g] - dg.p_max_kw) / base, where(id), tol);
      check("dg_reactive_limit", std::max(-d.dg_q[g], d.dg_q[g] - dg.q_max_kvar) / base, where(id), tol);
      double prev = std::numeric_limits<double>::quiet_NaN();
      if (t > 0) {
        prev = solution.steps[t - 1].dg_p[g];
      } else if (!problem.dg_prev_kw.empty() && problem.dg_prev_kw[g]) {
        prev = *problem.dg_prev_kw[g];
      }
      if (!std::isnan(prev)) check("dg_ramp", (std::abs(d.dg_p[g] - prev) - dg.ramp_kw) / base, where(id), tol);
    }

    // Nodal balance: sum of branch flows leaving each bus against the net
    // device injection there.
    std::vector<double> flow_p(nb, 0.0);
    std::vector<double> flow_q(nb, 0.0);
    for (const auto& br : net.branches) {
      const auto i = net.index_of(br.from);
      const auto j = net.index_of(br.to);
      const auto [g, b] = grid::series_admittance(br);
      const double dij = st.theta[i] - st.theta[j];
      const double vi = st.v[i];
      const double vj = st.v[j];
      const double pij = vi * vi * g - vi * vj * (g * std::cos(dij) + b * std::sin(dij));
      const double qij = -vi * vi * b - vi * vj * (g * std::sin(dij) - b * std::cos(dij));
      const double pji = vj * vj * g - vi * vj * (g * std::cos(dij) - b * std::sin(dij));
      const double qji = -vj * vj * b + vi * vj * (g * std::sin(dij) + b * std::cos(dij));
      flow_p[i] += pij;
      flow_q[i] += qij;
      flow_p[j] += pji;
      flow_q[j] += qji;
      check("branch_rating", std::sqrt(pij * pij + qij * qij) - br.rating,
            where(fmt::format("branch {}-{}", br.from, br.to)), tol);
    }
    std::vector<double> net_p(nb, 0.0);
    std::vector<double> net_q(nb, 0.0);
    for (std::size_t i = 0; i < nb; ++i) {
      net_p[i] = -problem.load_kw[t][i];
      net_q[i] = -problem.load_kvar[t][i];
    }
    for (std::size_t g = 0; g < assets.dgs.size(); ++g) {
      net_p[net.index_of(assets.dgs[g].bus)] += d.dg_p[g];
      net_q[net.index_of(assets.dgs[g].bus)] += d.dg_q[g];
    }
    for (std::size_t k = 0; k < assets.pvs.size(); ++k) {
      net_p[net.index_of(assets.pvs[k].bus)] += problem.pv_kw[t][k];
      net_q[net.index_of(assets.pvs[k].bus)] += d.pv_q[k];
      check("pv_reactive_limit", (std::abs(d.pv_q[k]) - assets.pvs[k].q_max_kvar) / base,
            where(fmt::format("pv {}", k)), tol);
    }
    for (std::size_t e = 0; e < assets.ess.size(); ++e) {
      const auto& es = assets.ess[e];
      const auto id = fmt::format("ess {}", e);
      net_p[net.index_of(es.bus)] += d.ess_dis[e] - d.ess_ch[e];
      net_q[net.index_of(es.bus)] -= d.ess_q[e];
      check("ess_reactive_limit", (std::abs(d.ess_q[e]) - es.q_max_kvar) / base, where(id), tol);

      const double uc = d.ess_u_ch[e];
      const double ud = d.ess_u_dis[e];
      const bool binary = (uc == 0.0 || uc == 1.0) && (ud == 0.0 || ud == 1.0);
      check("ess_indicator", binary ? 0.0 : 1.0, where(id + " indicators not binary"), tol);
      check("ess_indicator", uc + ud - 1.0, where(id + " u_ch + u_dis"), tol);
      check("ess_charge_limit", std::max(-d.ess_ch[e], d.ess_ch[e] - uc * es.p_ch_max_kw) / base, where(id), tol);
      check("ess_discharge_limit", std::max(-d.ess_dis[e], d.ess_dis[e] - ud * es.p_dis_max_kw) / base, where(id),
            tol);
      check("ess_complementarity", std::min(d.ess_ch[e], d.ess_dis[e]) / base, where(id), tol);

      soc[e] += problem.dt_h * (d.ess_ch[e] * es.eta_ch - d.ess_dis[e] / es.eta_dis) / es.capacity_kwh;
      check("soc_recursion", std::abs(d.soc[e] - soc[e]), where(id), 1e-9);
      check("soc_bounds", std::max(es.soc_min - d.soc[e], d.soc[e] - es.soc_max), where(id), tol);
      soc[e] = d.soc[e];
    }
    net_p[slack] -= d.pcc_p;
    net_q[slack] -= d.pcc_q;
    for (std::size_t i = 0; i < nb; ++i) {
      const auto id = fmt::format("bus {}", net.buses[i].id);
      check("active_balance", std::abs(net_p[i] / base - flow_p[i]), where(id), tol);
      check("reactive_balance", std::abs(net_q[i] / base - flow_q[i]), where(id), tol);
      if (i == slack) {
        check("pcc_voltage", std::abs(st.v[i] - problem.pcc_voltage[t]), where(id), tol);
      } else {
        check("bus_voltage", std::max(net.buses[i].v_min - st.v[i], st.v[i] - net.buses[i].v_max), where(id), tol);
      }
    }
  }
  return report;
}

}  // namespace gridcoop::dispatch
