// AVX2/FMA variants. This translation unit is compiled with -mavx2 -mfma and
// must only be entered after the runtime CPU check in kernels.cpp.

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "vicon/kernels.hpp"

namespace vicon::kernels::avx2 {
namespace {

constexpr std::size_t kRowBlock = 64;

// Accumulators are spelled out as named locals: indexing an array of __m256d
// inside the k-loop makes GCC keep them in memory.
#define VICON_ROWS(X) X(0) X(1) X(2) X(3) X(4) X(5)

template <int R>
inline void micro_8(const double* a, std::size_t lda, const double* b, std::size_t ldb, double* c,
                    std::size_t ldc, std::size_t k, bool accumulate) {
#define VICON_DECL(r) __m256d lo##r = _mm256_setzero_pd(), hi##r = _mm256_setzero_pd();
  VICON_ROWS(VICON_DECL)
#undef VICON_DECL
  if (accumulate) {
#define VICON_LOAD(r)                            \
  if constexpr (R > r) {                         \
    lo##r = _mm256_loadu_pd(c + r * ldc);        \
    hi##r = _mm256_loadu_pd(c + r * ldc + 4);    \
  }
    VICON_ROWS(VICON_LOAD)
#undef VICON_LOAD
  }
  for (std::size_t p = 0; p < k; ++p) {
    const __m256d b0 = _mm256_loadu_pd(b + p * ldb);
    const __m256d b1 = _mm256_loadu_pd(b + p * ldb + 4);
#define VICON_FMA(r)                                               \
  if constexpr (R > r) {                                           \
    const __m256d ar = _mm256_broadcast_sd(a + r * lda + p);       \
    lo##r = _mm256_fmadd_pd(ar, b0, lo##r);                        \
    hi##r = _mm256_fmadd_pd(ar, b1, hi##r);                        \
  }
    VICON_ROWS(VICON_FMA)
#undef VICON_FMA
  }
#define VICON_STORE(r)                          \
  if constexpr (R > r) {                        \
    _mm256_storeu_pd(c + r * ldc, lo##r);       \
    _mm256_storeu_pd(c + r * ldc + 4, hi##r);   \
  }
  VICON_ROWS(VICON_STORE)
#undef VICON_STORE
}

template <int R>
inline void micro_4(const double* a, std::size_t lda, const double* b, std::size_t ldb, double* c,
                    std::size_t ldc, std::size_t k, bool accumulate) {
#define VICON_DECL(r) __m256d acc##r = _mm256_setzero_pd();
  VICON_ROWS(VICON_DECL)
#undef VICON_DECL
  if (accumulate) {
#define VICON_LOAD(r) \
  if constexpr (R > r) acc##r = _mm256_loadu_pd(c + r * ldc);
    VICON_ROWS(VICON_LOAD)
#undef VICON_LOAD
  }
  for (std::size_t p = 0; p < k; ++p) {
    const __m256d b0 = _mm256_loadu_pd(b + p * ldb);
#define VICON_FMA(r) \
  if constexpr (R > r) acc##r = _mm256_fmadd_pd(_mm256_broadcast_sd(a + r * lda + p), b0, acc##r);
    VICON_ROWS(VICON_FMA)
#undef VICON_FMA
  }
#define VICON_STORE(r) \
  if constexpr (R > r) _mm256_storeu_pd(c + r * ldc, acc##r);
  VICON_ROWS(VICON_STORE)
#undef VICON_STORE
}

#undef VICON_ROWS

using MicroKernel = void (*)(const double*, std::size_t, const double*, std::size_t, double*,
                             std::size_t, std::size_t, bool);

constexpr MicroKernel kMicro8[] = {nullptr,     micro_8<1>, micro_8<2>, micro_8<3>,
                                   micro_8<4>, micro_8<5>, micro_8<6>};
constexpr MicroKernel kMicro4[] = {nullptr,     micro_4<1>, micro_4<2>, micro_4<3>,
                                   micro_4<4>, micro_4<5>, micro_4<6>};

inline double horizontal_sum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d pair = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(pair, _mm_unpackhi_pd(pair, pair)));
}

// Fewer than four output columns: dot products of A rows with gathered B columns.
void gemm_narrow(ConstMatrixView a, ConstMatrixView b, MatrixView c, bool accumulate) {
  const std::size_t k = a.cols;
  std::vector<double> column(k);
  for (std::size_t j = 0; j < c.cols; ++j) {
    for (std::size_t p = 0; p < k; ++p) column[p] = b.data[p * b.stride + j];
    for (std::size_t i = 0; i < c.rows; ++i) {
      const double* arow = a.data + i * a.stride;
      __m256d acc = _mm256_setzero_pd();
      std::size_t p = 0;
      for (; p + 4 <= k; p += 4) {
        acc = _mm256_fmadd_pd(_mm256_loadu_pd(arow + p), _mm256_loadu_pd(column.data() + p), acc);
      }
      double sum = horizontal_sum(acc);
      for (; p < k; ++p) sum = std::fma(arow[p], column[p], sum);
      double& dst = c.data[i * c.stride + j];
      dst = accumulate ? dst + sum : sum;
    }
  }
}

}  // namespace

void gemm(ConstMatrixView a, ConstMatrixView b, MatrixView c, bool accumulate) {
  const std::size_t m = c.rows;
  const std::size_t n = c.cols;
  const std::size_t k = a.cols;
  if (n < 4 && k >= 8) {
    gemm_narrow(a, b, c, accumulate);
    return;
  }
  for (std::size_t i0 = 0; i0 < m; i0 += kRowBlock) {
    const std::size_t i1 = std::min(m, i0 + kRowBlock);
    std::size_t j = 0;
    for (; j + 8 <= n; j += 8) {
      for (std::size_t i = i0; i < i1; i += 6) {
        const std::size_t rows = std::min<std::size_t>(6, i1 - i);
        kMicro8[rows](a.data + i * a.stride, a.stride, b.data + j, b.stride,
                      c.data + i * c.stride + j, c.stride, k, accumulate);
      }
    }
    if (j + 4 <= n) {
      for (std::size_t i = i0; i < i1; i += 6) {
        const std::size_t rows = std::min<std::size_t>(6, i1 - i);
        kMicro4[rows](a.data + i * a.stride, a.stride, b.data + j, b.stride,
                      c.data + i * c.stride + j, c.stride, k, accumulate);
      }
      j += 4;
    }
    for (; j < n; ++j) {
      for (std::size_t i = i0; i < i1; ++i) {
        const double* arow = a.data + i * a.stride;
        double sum = accumulate ? c.data[i * c.stride + j] : 0.0;
        for (std::size_t p = 0; p < k; ++p) sum = std::fma(arow[p], b.data[p * b.stride + j], sum);
        c.data[i * c.stride + j] = sum;
      }
    }
  }
}

void sincos(std::size_t n, const double* x, double* s, double* c) {
  // Cody-Waite reduction by pi/2 followed by minimax polynomials on [-pi/4, pi/4].
  const __m256d two_over_pi = _mm256_set1_pd(0.63661977236758134308);
  const __m256d dp1 = _mm256_set1_pd(1.57079625129699707031e0);
  const __m256d dp2 = _mm256_set1_pd(7.54978941586159635336e-8);
  const __m256d dp3 = _mm256_set1_pd(5.39030285815811905290e-15);
  const __m256d limit = _mm256_set1_pd(1e5);
  const __m256d abs_mask = _mm256_castsi256_pd(_mm256_set1_epi64x(0x7fffffffffffffffLL));
  const __m256i one = _mm256_set1_epi64x(1);
  const __m256i two = _mm256_set1_epi64x(2);

  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d xv = _mm256_loadu_pd(x + i);
    // Huge or non-finite lanes take the libm path.
    const __m256d in_range = _mm256_cmp_pd(_mm256_and_pd(xv, abs_mask), limit, _CMP_LT_OQ);
    if (_mm256_movemask_pd(in_range) != 0xF) {
      for (std::size_t l = i; l < i + 4; ++l) {
        const double xl = x[l];
        s[l] = std::sin(xl);
        c[l] = std::cos(xl);
      }
      continue;
    }
    const __m256d q =
        _mm256_round_pd(_mm256_mul_pd(xv, two_over_pi), _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
    __m256d r = _mm256_fnmadd_pd(q, dp1, xv);
    r = _mm256_fnmadd_pd(q, dp2, r);
    r = _mm256_fnmadd_pd(q, dp3, r);
    const __m256d z = _mm256_mul_pd(r, r);

    __m256d ps = _mm256_set1_pd(1.58962301576546568060e-10);
    ps = _mm256_fmadd_pd(ps, z, _mm256_set1_pd(-2.50507477628578072866e-8));
    ps = _mm256_fmadd_pd(ps, z, _mm256_set1_pd(2.75573136213857245213e-6));
    ps = _mm256_fmadd_pd(ps, z, _mm256_set1_pd(-1.98412698295895385996e-4));
    ps = _mm256_fmadd_pd(ps, z, _mm256_set1_pd(8.33333333332211858878e-3));
    ps = _mm256_fmadd_pd(ps, z, _mm256_set1_pd(-1.66666666666666307295e-1));
    const __m256d sin_r = _mm256_fmadd_pd(_mm256_mul_pd(r, z), ps, r);

    __m256d pc = _mm256_set1_pd(-1.13585365213876817300e-11);
    pc = _mm256_fmadd_pd(pc, z, _mm256_set1_pd(2.08757008419747316778e-9));
    pc = _mm256_fmadd_pd(pc, z, _mm256_set1_pd(-2.75573141792967388112e-7));
    pc = _mm256_fmadd_pd(pc, z, _mm256_set1_pd(2.48015872888517045348e-5));
    pc = _mm256_fmadd_pd(pc, z, _mm256_set1_pd(-1.38888888888730564116e-3));
    pc = _mm256_fmadd_pd(pc, z, _mm256_set1_pd(4.16666666666665929218e-2));
    const __m256d cos_r = _mm256_fmadd_pd(_mm256_mul_pd(z, z), pc,
                                          _mm256_fnmadd_pd(_mm256_set1_pd(0.5), z, _mm256_set1_pd(1.0)));

    const __m256i qi = _mm256_cvtepi32_epi64(_mm256_cvtpd_epi32(q));
    const __m256d swap = _mm256_castsi256_pd(_mm256_cmpeq_epi64(_mm256_and_si256(qi, one), one));
    const __m256d sin_sign = _mm256_castsi256_pd(_mm256_slli_epi64(_mm256_and_si256(qi, two), 62));
    const __m256d cos_sign =
        _mm256_castsi256_pd(_mm256_slli_epi64(_mm256_and_si256(_mm256_add_epi64(qi, one), two), 62));

    const __m256d sv = _mm256_xor_pd(_mm256_blendv_pd(sin_r, cos_r, swap), sin_sign);
    const __m256d cv = _mm256_xor_pd(_mm256_blendv_pd(cos_r, sin_r, swap), cos_sign);
    _mm256_storeu_pd(s + i, sv);
    _mm256_storeu_pd(c + i, cv);
  }
  for (; i < n; ++i) {
    const double xi = x[i];
    s[i] = std::sin(xi);
    c[i] = std::cos(xi);
  }
}

void scaled_product(std::size_t n, double alpha, const double* x, const double* y, double* out) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_mul_pd(_mm256_mul_pd(av, _mm256_loadu_pd(x + i)), _mm256_loadu_pd(y + i));
    _mm256_storeu_pd(out + i, v);
  }
  for (; i < n; ++i) out[i] = alpha * x[i] * y[i];
}

void adam_update(std::size_t n, double* params, const double* grads, double* m, double* v,
                 const AdamCoefficients& k) {
  const __m256d b1 = _mm256_set1_pd(k.beta1);
  const __m256d b2 = _mm256_set1_pd(k.beta2);
  const __m256d one_b1 = _mm256_set1_pd(1.0 - k.beta1);
  const __m256d one_b2 = _mm256_set1_pd(1.0 - k.beta2);
  const __m256d c1 = _mm256_set1_pd(k.bias_correction1);
  const __m256d c2 = _mm256_set1_pd(k.bias_correction2);
  const __m256d lr = _mm256_set1_pd(k.lr);
  const __m256d eps = _mm256_set1_pd(k.epsilon);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d g = _mm256_loadu_pd(grads + i);
    const __m256d mv = _mm256_add_pd(_mm256_mul_pd(b1, _mm256_loadu_pd(m + i)), _mm256_mul_pd(one_b1, g));
    const __m256d vv = _mm256_add_pd(_mm256_mul_pd(b2, _mm256_loadu_pd(v + i)),
                                     _mm256_mul_pd(_mm256_mul_pd(one_b2, g), g));
    _mm256_storeu_pd(m + i, mv);
    _mm256_storeu_pd(v + i, vv);
    const __m256d m_hat = _mm256_div_pd(mv, c1);
    const __m256d v_hat = _mm256_div_pd(vv, c2);
    const __m256d step = _mm256_div_pd(_mm256_mul_pd(lr, m_hat), _mm256_add_pd(_mm256_sqrt_pd(v_hat), eps));
    _mm256_storeu_pd(params + i, _mm256_sub_pd(_mm256_loadu_pd(params + i), step));
  }
  if (i < n) scalar::adam_update(n - i, params + i, grads + i, m + i, v + i, k);
}

}  // namespace vicon::kernels::avx2
