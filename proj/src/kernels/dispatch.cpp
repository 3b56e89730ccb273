#include <cstdlib>
#include <stdexcept>
#include <string>

#include "gridcoop/kernels/kernels.hpp"

namespace gridcoop::kernels {

namespace {

struct Table {
  Isa isa;
  double (*dot)(const double*, const double*, std::size_t) noexcept;
  void (*axpy)(double, const double*, double*, std::size_t) noexcept;
  void (*scale)(double, double*, std::size_t) noexcept;
};

Table table_for(Isa isa) {
  switch (isa) {
#if defined(GRIDCOOP_HAVE_AVX2)
    case Isa::avx2:
      return {Isa::avx2, avx2::dot, avx2::axpy, avx2::scale};
#endif
#if defined(GRIDCOOP_HAVE_NEON)
    case Isa::neon:
      return {Isa::neon, neon::dot, neon::axpy, neon::scale};
#endif
    default:
      return {Isa::scalar, scalar::dot, scalar::axpy, scalar::scale};
  }
}

Isa detect() {
  if (const char* env = std::getenv("GRIDCOOP_SIMD")) {
    const std::string want(env);
    if (want == "scalar") return Isa::scalar;
    if (want == "avx2" && isa_supported(Isa::avx2)) return Isa::avx2;
    if (want == "neon" && isa_supported(Isa::neon)) return Isa::neon;
  }
  if (isa_supported(Isa::avx2)) return Isa::avx2;
  if (isa_supported(Isa::neon)) return Isa::neon;
  return Isa::scalar;
}

Table& active() {
  static Table table = table_for(detect());
  return table;
}

void check_sizes(std::size_t a, std::size_t b) {
  if (a != b) throw std::invalid_argument("kernel operand size mismatch");
}

}  // namespace

std::string_view isa_name(Isa isa) noexcept {
  switch (isa) {
    case Isa::avx2: return "avx2";
    case Isa::neon: return "neon";
    default: return "scalar";
  }
}

bool isa_supported(Isa isa) noexcept {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
#if defined(GRIDCOOP_HAVE_AVX2)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Isa::neon:
#if defined(GRIDCOOP_HAVE_NEON)
      return true;
#else
      return false;
#endif
  }
  return false;
}

Isa active_isa() noexcept { return active().isa; }

void force_isa(Isa isa) {
  if (!isa_supported(isa)) {
    throw std::invalid_argument("SIMD variant not supported on this CPU: " + std::string(isa_name(isa)));
  }
  active() = table_for(isa);
}

double dot(std::span<const double> a, std::span<const double> b) {
  check_sizes(a.size(), b.size());
  return active().dot(a.data(), b.data(), a.size());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  check_sizes(x.size(), y.size());
  active().axpy(alpha, x.data(), y.data(), x.size());
}

void scale(double alpha, std::span<double> x) { active().scale(alpha, x.data(), x.size()); }

void rank1_update(double alpha, std::span<const double> u, std::span<const double> v,
                  std::span<double> a, std::size_t ld) {
  if (ld < v.size() || a.size() < (u.empty() ? 0 : (u.size() - 1) * ld + v.size())) {
    throw std::invalid_argument("rank1_update: matrix too small");
  }
  const auto& t = active();
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double s = alpha * u[i];
    if (s != 0.0) t.axpy(s, v.data(), a.data() + i * ld, v.size());
  }
}

void gemv(std::span<const double> a, std::size_t ld, std::span<const double> x,
          std::span<double> y) {
  if (ld < x.size() || a.size() < (y.empty() ? 0 : (y.size() - 1) * ld + x.size())) {
    throw std::invalid_argument("gemv: matrix too small");
  }
  const auto& t = active();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = t.dot(a.data() + i * ld, x.data(), x.size());
}

}  // namespace gridcoop::kernels
