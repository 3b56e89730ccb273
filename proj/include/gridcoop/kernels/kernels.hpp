#pragma once

// Dense double-precision kernels used by the simplex tableau, the RLS update
// and the value model. Each kernel has a scalar reference implementation and
// vectorized variants; the variant is picked once at startup from the CPU
// feature flags and can be overridden with GRIDCOOP_SIMD=scalar|avx2|neon.

#include <cstddef>
#include <span>
#include <string_view>

namespace gridcoop::kernels {

enum class Isa { scalar, avx2, neon };

std::string_view isa_name(Isa isa) noexcept;
bool isa_supported(Isa isa) noexcept;
Isa active_isa() noexcept;

/// Switches the active variant. Throws std::invalid_argument if the CPU
/// cannot run it.
void force_isa(Isa isa);

double dot(std::span<const double> a, std::span<const double> b);

/// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);

/// x *= alpha
void scale(double alpha, std::span<double> x);

/// a (rows x cols, row-major, leading dimension ld) += alpha * u * v^T
void rank1_update(double alpha, std::span<const double> u, std::span<const double> v,
                  std::span<double> a, std::size_t ld);

/// y = a * x for a row-major (rows x cols) matrix with leading dimension ld.
void gemv(std::span<const double> a, std::size_t ld, std::span<const double> x,
          std::span<double> y);

// Raw entry points per variant. Exposed for equivalence tests.
namespace scalar {
double dot(const double* a, const double* b, std::size_t n) noexcept;
void axpy(double alpha, const double* x, double* y, std::size_t n) noexcept;
void scale(double alpha, double* x, std::size_t n) noexcept;
}  // namespace scalar

namespace avx2 {
double dot(const double* a, const double* b, std::size_t n) noexcept;
void axpy(double alpha, const double* x, double* y, std::size_t n) noexcept;
void scale(double alpha, double* x, std::size_t n) noexcept;
}  // namespace avx2

namespace neon {
double dot(const double* a, const double* b, std::size_t n) noexcept;
void axpy(double alpha, const double* x, double* y, std::size_t n) noexcept;
void scale(double alpha, double* x, std::size_t n) noexcept;
}  // namespace neon

}  // namespace gridcoop::kernels
