#include <chrono>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "gridcoop/coord.hpp"
#include "gridcoop/errors.hpp"

namespace gridcoop::coord {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

Evaluation evaluate_action(const rl::ActionVector& action, const System& system, const WindowData& truth,
                           const std::vector<MgStartState>& start, const ExchangeConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  Evaluation ev;
  ev.exchange = fixed_point_exchange(action, system, {truth, {}, {}, start, {}}, config);
  ev.welfare = welfare(ev.exchange, truth, action);
  ev.seconds = seconds_since(t0);
  return ev;
}

std::vector<double> price_grid(const rl::PriceBounds& bounds, int points) {
  bounds.validate();
  if (points < 1) throw ValidationError("price grid needs at least one point");
  if (points == 1) return {bounds.lo};
  std::vector<double> g(points);
  for (int k = 0; k < points; ++k) g[k] = bounds.lo + (bounds.hi - bounds.lo) * k / (points - 1);
  g.back() = bounds.hi;
  return g;
}

OracleResult centralized_oracle(const System& system, const WindowData& truth, const std::vector<MgStartState>& start,
                                const rl::PriceBounds& bounds, int points, const ExchangeConfig& config,
                                long long max_evaluations) {
  const auto grid = price_grid(bounds, points);
  const int N = system.mgs();
  const int T = truth.steps();
  const int cells = N * T;
  long long total = 1;
  for (int k = 0; k < cells; ++k) {
    if (total > max_evaluations / points) {
      throw ValidationError(fmt::format("oracle grid {}^{} exceeds {} evaluations; use a coarser grid or a shorter window",
                                        points, cells, max_evaluations));
    }
    total *= points;
  }

  const auto t0 = std::chrono::steady_clock::now();
  OracleResult best;
  best.best_welfare = -std::numeric_limits<double>::infinity();
  rl::ActionVector a{Eigen::MatrixXd(N, T)};
  std::vector<int> digit(cells, 0);
  std::string last_error;
  for (long long i = 0; i < total; ++i) {
    for (int k = 0; k < cells; ++k) a.price(k % N, k / N) = grid[digit[k]];
    try {
      const auto ev = evaluate_action(a, system, truth, start, config);
      if (ev.welfare > best.best_welfare) {
        best.best_welfare = ev.welfare;
        best.best_action = a;
      }
    } catch (const NumericalError& e) {
      last_error = e.what();  // an action the microgrids cannot serve is simply not a candidate
    }
    ++best.evaluations;
    for (int k = 0; k < cells && ++digit[k] == points; ++k) digit[k] = 0;
  }
  best.seconds = seconds_since(t0);
  if (!std::isfinite(best.best_welfare)) {
    throw NumericalError("oracle: no action on the grid could be evaluated (last error: " + last_error + ")");
  }
  return best;
}

}  // namespace gridcoop::coord
