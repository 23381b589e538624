#include "vicon/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

#include "vicon/errors.hpp"

namespace vicon::kernels {
namespace {

bool cpu_has_avx2() noexcept {
#if defined(VICON_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa initial_isa() noexcept {
  // VICON_ISA=scalar forces the reference path for a whole process.
  if (const char* env = std::getenv("VICON_ISA"); env != nullptr && std::string(env) == "scalar") {
    return Isa::Scalar;
  }
  return best_isa();
}

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{initial_isa()};
  return isa;
}

void check_matrix_shapes(const ConstMatrixView& a, const ConstMatrixView& b, const MatrixView& c) {
  if (a.cols != b.rows || c.rows != a.rows || c.cols != b.cols) {
    throw DimensionError("gemm: incompatible shapes");
  }
}

}  // namespace

const char* isa_name(Isa isa) noexcept {
  return isa == Isa::Avx2 ? "avx2" : "scalar";
}

bool isa_supported(Isa isa) noexcept {
  return isa == Isa::Scalar || cpu_has_avx2();
}

Isa best_isa() noexcept {
  return cpu_has_avx2() ? Isa::Avx2 : Isa::Scalar;
}

Isa active_isa() noexcept {
  return current().load(std::memory_order_relaxed);
}

void set_active_isa(Isa isa) {
  if (!isa_supported(isa)) {
    throw ConfigError(std::string("kernel ISA not supported here: ") + isa_name(isa));
  }
  current().store(isa, std::memory_order_relaxed);
}

void gemm(ConstMatrixView a, ConstMatrixView b, MatrixView c, bool accumulate) {
  check_matrix_shapes(a, b, c);
  if (active_isa() == Isa::Avx2) {
    avx2::gemm(a, b, c, accumulate);
  } else {
    scalar::gemm(a, b, c, accumulate);
  }
}

void sincos(std::span<const double> x, std::span<double> s, std::span<double> c) {
  if (s.size() != x.size() || c.size() != x.size()) throw DimensionError("sincos: size mismatch");
  if (active_isa() == Isa::Avx2) {
    avx2::sincos(x.size(), x.data(), s.data(), c.data());
  } else {
    scalar::sincos(x.size(), x.data(), s.data(), c.data());
  }
}

void scaled_product(double alpha, std::span<const double> x, std::span<const double> y,
                    std::span<double> out) {
  if (y.size() != x.size() || out.size() != x.size()) {
    throw DimensionError("scaled_product: size mismatch");
  }
  if (active_isa() == Isa::Avx2) {
    avx2::scaled_product(x.size(), alpha, x.data(), y.data(), out.data());
  } else {
    scalar::scaled_product(x.size(), alpha, x.data(), y.data(), out.data());
  }
}

void adam_update(std::span<double> params, std::span<const double> grads, std::span<double> m,
                 std::span<double> v, const AdamCoefficients& k) {
  const auto n = params.size();
  if (grads.size() != n || m.size() != n || v.size() != n) {
    throw DimensionError("adam_update: size mismatch");
  }
  if (active_isa() == Isa::Avx2) {
    avx2::adam_update(n, params.data(), grads.data(), m.data(), v.data(), k);
  } else {
    scalar::adam_update(n, params.data(), grads.data(), m.data(), v.data(), k);
  }
}

#if !defined(VICON_HAVE_AVX2)
// Unreachable: isa_supported(Avx2) is false without the AVX2 translation unit.
namespace avx2 {
void gemm(ConstMatrixView a, ConstMatrixView b, MatrixView c, bool accumulate) {
  scalar::gemm(a, b, c, accumulate);
}
void sincos(std::size_t n, const double* x, double* s, double* c) { scalar::sincos(n, x, s, c); }
void scaled_product(std::size_t n, double alpha, const double* x, const double* y, double* out) {
  scalar::scaled_product(n, alpha, x, y, out);
}
void adam_update(std::size_t n, double* params, const double* grads, double* m, double* v,
                 const AdamCoefficients& k) {
  scalar::adam_update(n, params, grads, m, v, k);
}
}  // namespace avx2
#endif

}  // namespace vicon::kernels
