#pragma once

// Data-parallel inner loops of the training core. Every kernel has a portable
// scalar reference and, on x86-64, an AVX2/FMA variant. The variant is picked
// at runtime from CPUID and can be forced for testing.

#include <cstddef>
#include <span>

namespace vicon::kernels {

enum class Isa { Scalar, Avx2 };

const char* isa_name(Isa isa) noexcept;
bool isa_supported(Isa isa) noexcept;
Isa best_isa() noexcept;
Isa active_isa() noexcept;
// Throws ConfigError when the requested ISA is not available on this CPU/build.
void set_active_isa(Isa isa);

class ScopedIsa {
 public:
  explicit ScopedIsa(Isa isa) : previous_(active_isa()) { set_active_isa(isa); }
  ~ScopedIsa() { set_active_isa(previous_); }
  ScopedIsa(const ScopedIsa&) = delete;
  ScopedIsa& operator=(const ScopedIsa&) = delete;

 private:
  Isa previous_;
};

// Row-major strided views.
struct ConstMatrixView {
  const double* data = nullptr;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t stride = 0;
};

struct MatrixView {
  double* data = nullptr;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t stride = 0;
};

struct AdamCoefficients {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double bias_correction1 = 1.0;  // 1 - beta1^t
  double bias_correction2 = 1.0;  // 1 - beta2^t
};

/// c = a * b, or c += a * b when `accumulate` is set.
void gemm(ConstMatrixView a, ConstMatrixView b, MatrixView c, bool accumulate);

/// Elementwise sine and cosine.
void sincos(std::span<const double> x, std::span<double> s, std::span<double> c);

/// out = alpha * x * y elementwise. `out` may alias x or y.
void scaled_product(double alpha, std::span<const double> x, std::span<const double> y,
                    std::span<double> out);

/// One bias-corrected Adam update over a flat parameter vector.
void adam_update(std::span<double> params, std::span<const double> grads, std::span<double> m,
                 std::span<double> v, const AdamCoefficients& k);

// Per-ISA entry points; the dispatching functions above forward to these.
namespace scalar {
void gemm(ConstMatrixView a, ConstMatrixView b, MatrixView c, bool accumulate);
void sincos(std::size_t n, const double* x, double* s, double* c);
void scaled_product(std::size_t n, double alpha, const double* x, const double* y, double* out);
void adam_update(std::size_t n, double* params, const double* grads, double* m, double* v,
                 const AdamCoefficients& k);
}  // namespace scalar

namespace avx2 {
void gemm(ConstMatrixView a, ConstMatrixView b, MatrixView c, bool accumulate);
void sincos(std::size_t n, const double* x, double* s, double* c);
void scaled_product(std::size_t n, double alpha, const double* x, const double* y, double* out);
void adam_update(std::size_t n, double* params, const double* grads, double* m, double* v,
                 const AdamCoefficients& k);
}  // namespace avx2

}  // namespace vicon::kernels
