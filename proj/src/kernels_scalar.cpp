#include <cmath>

#include "vicon/kernels.hpp"

namespace vicon::kernels::scalar {

void gemm(ConstMatrixView a, ConstMatrixView b, MatrixView c, bool accumulate) {
  for (std::size_t i = 0; i < c.rows; ++i) {
    double* crow = c.data + i * c.stride;
    if (!accumulate) {
      for (std::size_t j = 0; j < c.cols; ++j) crow[j] = 0.0;
    }
    const double* arow = a.data + i * a.stride;
    for (std::size_t p = 0; p < a.cols; ++p) {
      const double aip = arow[p];
      const double* brow = b.data + p * b.stride;
      for (std::size_t j = 0; j < c.cols; ++j) crow[j] += aip * brow[j];
    }
  }
}

void sincos(std::size_t n, const double* x, double* s, double* c) {
  for (std::size_t i = 0; i < n; ++i) {
    const double xi = x[i];
    s[i] = std::sin(xi);
    c[i] = std::cos(xi);
  }
}

void scaled_product(std::size_t n, double alpha, const double* x, const double* y, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = alpha * x[i] * y[i];
}

void adam_update(std::size_t n, double* params, const double* grads, double* m, double* v,
                 const AdamCoefficients& k) {
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grads[i];
    m[i] = k.beta1 * m[i] + (1.0 - k.beta1) * g;
    v[i] = k.beta2 * v[i] + (1.0 - k.beta2) * g * g;
    const double m_hat = m[i] / k.bias_correction1;
    const double v_hat = v[i] / k.bias_correction2;
    params[i] -= k.lr * m_hat / (std::sqrt(v_hat) + k.epsilon);
  }
}

}  // namespace vicon::kernels::scalar
