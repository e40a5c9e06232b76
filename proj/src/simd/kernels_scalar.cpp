#include "cpla/simd/kernels.hpp"

namespace cpla::simd {
namespace {

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void gemv_rows(const double* a, std::size_t m, std::size_t n, std::size_t stride, const double* x, double* out) {
  for (std::size_t r = 0; r < m; ++r) out[r] = dot(a + r * stride, x, n);
}

void residual_rows(const double* a, std::size_t m, std::size_t n, std::size_t stride, const double* x,
                   const double* u, double* out) {
  for (std::size_t r = 0; r < m; ++r) out[r] = u[r] - dot(a + r * stride, x, n);
}

}  // namespace

const KernelTable& scalar_kernels() {
  static const KernelTable table{"scalar", dot, axpy, gemv_rows, residual_rows};
  return table;
}

}  // namespace cpla::simd
