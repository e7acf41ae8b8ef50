#include "fareflow/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>
#include <stdexcept>

#include "kernels_internal.hpp"

namespace fareflow::kernels {
namespace {

using detail::OpsTable;

std::atomic<const OpsTable*> g_ops{nullptr};
std::atomic<Backend> g_backend{Backend::scalar};

const OpsTable* init_dispatch() {
  Backend want = cpu_has_avx2() ? Backend::avx2 : Backend::scalar;
  // FAREFLOW_KERNELS=scalar forces the reference path; handy when comparing
  // outputs across machines.
  if (const char* env = std::getenv("FAREFLOW_KERNELS")) {
    if (std::strcmp(env, "scalar") == 0) want = Backend::scalar;
    if (std::strcmp(env, "avx2") == 0 && cpu_has_avx2()) want = Backend::avx2;
  }
  g_backend.store(want);
  return want == Backend::avx2 ? &detail::avx2_ops() : &detail::scalar_ops();
}

inline const OpsTable& ops() {
  const OpsTable* t = g_ops.load(std::memory_order_acquire);
  if (!t) {
    t = init_dispatch();
    g_ops.store(t, std::memory_order_release);
  }
  return *t;
}

}  // namespace

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend active_backend() {
  ops();
  return g_backend.load();
}

void set_backend(Backend b) {
  if (b == Backend::avx2 && !cpu_has_avx2()) {
    throw std::runtime_error("kernels: avx2 backend not supported on this CPU");
  }
  g_backend.store(b);
  g_ops.store(b == Backend::avx2 ? &detail::avx2_ops() : &detail::scalar_ops(),
              std::memory_order_release);
}

std::string backend_name(Backend b) {
  return b == Backend::avx2 ? "avx2" : "scalar";
}

double dot(const double* x, const double* y, std::size_t n) {
  return ops().dot(x, y, n);
}
void axpy(double a, const double* x, double* y, std::size_t n) {
  ops().axpy(a, x, y, n);
}
void add(const double* x, double* y, std::size_t n) { ops().add(x, y, n); }
void scale(double a, double* x, std::size_t n) { ops().scale(a, x, n); }
double sum(const double* x, std::size_t n) { return ops().sum(x, n); }
void relu(double* x, std::size_t n) { ops().relu(x, n); }
void relu_backward(const double* pre, double* grad, std::size_t n) {
  ops().relu_backward(pre, grad, n);
}
void shift_add_max(double* dst, const double* src, std::size_t n,
                   std::size_t shift, double add) {
  ops().shift_add_max(dst, src, n, shift, add);
}

void matvec(const double* w, std::size_t rows, std::size_t cols,
            const double* x, double* out) {
  for (std::size_t r = 0; r < rows; ++r) {
    out[r] = dot(w + r * cols, x, cols);
  }
}

void matvec_t_acc(const double* w, std::size_t rows, std::size_t cols,
                  const double* d, double* out) {
  for (std::size_t r = 0; r < rows; ++r) {
    axpy(d[r], w + r * cols, out, cols);
  }
}

void rank1_acc(double* w, std::size_t rows, std::size_t cols, const double* d,
               const double* x) {
  for (std::size_t r = 0; r < rows; ++r) {
    axpy(d[r], x, w + r * cols, cols);
  }
}

}  // namespace fareflow::kernels
