#pragma once

#include <cstddef>
#include <string>

// Data-parallel inner loops used by the value networks and the knapsack DP.
// Scalar reference implementations always exist; an AVX2 variant is selected
// at runtime when the CPU supports it. The two backends are equivalence-
// tested against each other (bit-exact for elementwise ops, tight tolerance
// for reductions, whose association order differs).
//
// All functions are pure w.r.t. their inputs and safe to call concurrently.
// Arrays are unit-stride doubles; matrices are row-major.
namespace fareflow::kernels {

enum class Backend { scalar, avx2 };

bool cpu_has_avx2();
Backend active_backend();
void set_backend(Backend b);  // throws if the CPU lacks the backend
std::string backend_name(Backend b);

double dot(const double* x, const double* y, std::size_t n);
void axpy(double a, const double* x, double* y, std::size_t n);  // y += a*x
void add(const double* x, double* y, std::size_t n);             // y += x
void scale(double a, double* x, std::size_t n);
double sum(const double* x, std::size_t n);
void relu(double* x, std::size_t n);
// grad[i] = pre[i] > 0 ? grad[i] : 0
void relu_backward(const double* pre, double* grad, std::size_t n);
// dst[b] = max(dst[b], src[b - shift] + add) for b in [shift, n).
// dst and src must not alias.
void shift_add_max(double* dst, const double* src, std::size_t n,
                   std::size_t shift, double add);

// Composites over the dispatched primitives.
void matvec(const double* w, std::size_t rows, std::size_t cols,
            const double* x, double* out);  // out = W x
void matvec_t_acc(const double* w, std::size_t rows, std::size_t cols,
                  const double* d, double* out);  // out += W^T d
void rank1_acc(double* w, std::size_t rows, std::size_t cols, const double* d,
               const double* x);  // W += d x^T

}  // namespace fareflow::kernels
