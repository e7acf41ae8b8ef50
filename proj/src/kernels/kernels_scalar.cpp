#include <algorithm>
#include <cstddef>

#include "kernels_internal.hpp"

// Reference kernels. Plain loops, no pragmas: these define the semantics the
// SIMD backend is tested against.
namespace fareflow::kernels::detail {
namespace {

double dot_scalar(const double* x, const double* y, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

void axpy_scalar(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void add_scalar(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += x[i];
}

void scale_scalar(double a, double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= a;
}

double sum_scalar(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

void relu_scalar(double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward_scalar(const double* pre, double* grad, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    if (!(pre[i] > 0.0)) grad[i] = 0.0;
  }
}

void shift_add_max_scalar(double* dst, const double* src, std::size_t n,
                          std::size_t shift, double add) {
  for (std::size_t b = shift; b < n; ++b) {
    dst[b] = std::max(dst[b], src[b - shift] + add);
  }
}

}  // namespace

const OpsTable& scalar_ops() {
  static const OpsTable table{dot_scalar,  axpy_scalar,
                              add_scalar,  scale_scalar,
                              sum_scalar,  relu_scalar,
                              relu_backward_scalar, shift_add_max_scalar};
  return table;
}

}  // namespace fareflow::kernels::detail
