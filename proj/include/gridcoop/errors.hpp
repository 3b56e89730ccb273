#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace gridcoop {

/// Bad input: malformed files, violated invariants, out-of-range settings.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Any numerical failure (divergence, infeasibility, non-convergence).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  IoError(const std::string& what, std::string path)
      : std::runtime_error(what + ": " + path), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

/// Newton-Raphson did not reach the mismatch tolerance.
class DivergenceError : public NumericalError {
 public:
  DivergenceError(const std::string& what, double last_residual, int iterations)
      : NumericalError(what), last_residual_(last_residual), iterations_(iterations) {}
  double last_residual() const noexcept { return last_residual_; }
  int iterations() const noexcept { return iterations_; }

 private:
  double last_residual_;
  int iterations_;
};

/// The dispatch problem has no solution satisfying one constraint family.
class InfeasibleError : public NumericalError {
 public:
  InfeasibleError(const std::string& family, double violation)
      : NumericalError("infeasible dispatch: violated constraint family '" + family +
                       "' (violation " + std::to_string(violation) + ")"),
        family_(family),
        violation_(violation) {}
  const std::string& family() const noexcept { return family_; }
  double violation() const noexcept { return violation_; }

 private:
  std::string family_;
  double violation_;
};

/// The MG/feeder voltage exchange did not settle.
class ExchangeDivergence : public NumericalError {
 public:
  ExchangeDivergence(const std::string& what, std::vector<std::vector<double>> trajectory)
      : NumericalError(what), trajectory_(std::move(trajectory)) {}
  /// One entry per exchange iteration, each holding the PCC voltages (mg-major).
  const std::vector<std::vector<double>>& trajectory() const noexcept { return trajectory_; }

 private:
  std::vector<std::vector<double>> trajectory_;
};

}  // namespace gridcoop
