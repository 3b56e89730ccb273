#pragma once

// Compact dense bounded-variable primal simplex. Sized for the few-hundred
// row programs produced by one sequential-linear-programming iteration.

#include <limits>
#include <vector>

namespace gridcoop::lp {

inline constexpr double inf = std::numeric_limits<double>::infinity();

enum class Sense { le, ge, eq };

struct Term {
  int var;
  double coef;
};

struct Row {
  std::vector<Term> terms;
  Sense sense = Sense::le;
  double rhs = 0.0;
};

class LinearProgram {
 public:
  /// Adds a variable with bounds and objective coefficient (minimized).
  /// `start` is the value the variable holds before it enters the basis;
  /// NaN means "nearest finite bound".
  int add_variable(double lower, double upper, double cost,
                   double start = std::numeric_limits<double>::quiet_NaN());
  int add_row(std::vector<Term> terms, Sense sense, double rhs);

  int num_variables() const noexcept { return static_cast<int>(cost.size()); }
  int num_rows() const noexcept { return static_cast<int>(rows.size()); }

  std::vector<double> cost;
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<double> start;
  std::vector<Row> rows;
};

enum class Status { optimal, infeasible, unbounded, iteration_limit };

const char* to_string(Status status) noexcept;

struct Options {
  double feasibility_tol = 1e-9;
  double optimality_tol = 1e-9;
  double pivot_tol = 1e-11;
  int max_iterations = 0;  // 0 = automatic
};

struct Solution {
  Status status = Status::iteration_limit;
  std::vector<double> x;
  double objective = 0.0;
  int iterations = 0;
};

Solution solve(const LinearProgram& program, const Options& options = {});

}  // namespace gridcoop::lp
