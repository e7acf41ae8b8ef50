#include <immintrin.h>

#include <cstddef>

#include "kernels_internal.hpp"

// AVX2/FMA variants, 4 doubles per vector. This translation unit is the only
// one compiled with -mavx2 -mfma; it must be reached through the dispatch
// table after the CPU check.
//
// Elementwise ops must round exactly like the scalar backend, so they use
// separate mul/add intrinsics and the TU is built with -ffp-contract=off
// (otherwise the compiler would fuse the scalar tails). Explicit FMA stays
// in dot, whose association order already differs and which is tested to a
// reduction tolerance instead.
namespace fareflow::kernels::detail {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d shuf = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, shuf));
}

double dot_avx2(const double* x, const double* y, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc);
  }
  double tail = 0.0;
  for (; i < n; ++i) tail += x[i] * y[i];
  return hsum(acc) + tail;
}

void axpy_avx2(double a, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vy = _mm256_loadu_pd(y + i);
    vy = _mm256_add_pd(vy, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
    _mm256_storeu_pd(y + i, vy);
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void add_avx2(const double* x, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(
        y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), _mm256_loadu_pd(x + i)));
  }
  for (; i < n; ++i) y[i] += x[i];
}

void scale_avx2(double a, double* x, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(x + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), va));
  }
  for (; i < n; ++i) x[i] *= a;
}

double sum_avx2(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
  }
  double tail = 0.0;
  for (; i < n; ++i) tail += x[i];
  return hsum(acc) + tail;
}

void relu_avx2(double* x, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(x + i, _mm256_max_pd(_mm256_loadu_pd(x + i), zero));
  }
  for (; i < n; ++i) x[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward_avx2(const double* pre, double* grad, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(pre + i), zero, _CMP_GT_OQ);
    _mm256_storeu_pd(grad + i,
                     _mm256_and_pd(_mm256_loadu_pd(grad + i), mask));
  }
  for (; i < n; ++i) {
    if (!(pre[i] > 0.0)) grad[i] = 0.0;
  }
}

void shift_add_max_avx2(double* dst, const double* src, std::size_t n,
                        std::size_t shift, double add) {
  const __m256d vadd = _mm256_set1_pd(add);
  std::size_t b = shift;
  for (; b + 4 <= n; b += 4) {
    __m256d cand = _mm256_add_pd(_mm256_loadu_pd(src + b - shift), vadd);
    _mm256_storeu_pd(dst + b, _mm256_max_pd(_mm256_loadu_pd(dst + b), cand));
  }
  for (; b < n; ++b) {
    double cand = src[b - shift] + add;
    if (cand > dst[b]) dst[b] = cand;
  }
}

}  // namespace

const OpsTable& avx2_ops() {
  static const OpsTable table{dot_avx2,  axpy_avx2,
                              add_avx2,  scale_avx2,
                              sum_avx2,  relu_avx2,
                              relu_backward_avx2, shift_add_max_avx2};
  return table;
}

}  // namespace fareflow::kernels::detail
