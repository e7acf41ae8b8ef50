#pragma once

#include <cstddef>

namespace fareflow::kernels::detail {

struct OpsTable {
  double (*dot)(const double*, const double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
  void (*add)(const double*, double*, std::size_t);
  void (*scale)(double, double*, std::size_t);
  double (*sum)(const double*, std::size_t);
  void (*relu)(double*, std::size_t);
  void (*relu_backward)(const double*, double*, std::size_t);
  void (*shift_add_max)(double*, const double*, std::size_t, std::size_t,
                        double);
};

const OpsTable& scalar_ops();
const OpsTable& avx2_ops();  // only call through dispatch when supported

}  // namespace fareflow::kernels::detail
