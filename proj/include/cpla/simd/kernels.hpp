#pragma once

#include <cstddef>
#include <string_view>

namespace cpla::simd {

// Dense double-precision kernels behind the LP pricing loop, sample
// rotation and batch prediction. Every table computes the same functions;
// results differ only by floating-point summation order.
struct KernelTable {
  std::string_view name;

  double (*dot)(const double* a, const double* b, std::size_t n);

  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);

  // out[r] = dot(a + r * stride, x, n) for r in [0, m)
  void (*gemv_rows)(const double* a, std::size_t m, std::size_t n, std::size_t stride, const double* x, double* out);

  // out[r] = u[r] - dot(a + r * stride, x, n)
  void (*residual_rows)(const double* a, std::size_t m, std::size_t n, std::size_t stride, const double* x,
                        const double* u, double* out);
};

const KernelTable& scalar_kernels();

/// AVX2+FMA table, or nullptr when the build has no x86 AVX2 support.
const KernelTable* avx2_kernels();

bool cpu_supports_avx2();

/// The table used by the library. Chosen once: AVX2 when the CPU supports
/// it, scalar otherwise. CPLA_SIMD=scalar|avx2 in the environment overrides.
const KernelTable& active_kernels();

}  // namespace cpla::simd
