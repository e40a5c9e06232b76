#include "cpla/simd/kernels.hpp"

#if defined(__x86_64__) || defined(__i386__)
#include <immintrin.h>
#define CPLA_HAVE_AVX2_KERNELS 1
#define CPLA_AVX2 __attribute__((target("avx2,fma")))
#endif

namespace cpla::simd {

#ifdef CPLA_HAVE_AVX2_KERNELS
namespace {

CPLA_AVX2 inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

CPLA_AVX2 double dot(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  __m256d acc2 = _mm256_setzero_pd();
  __m256d acc3 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
    acc2 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 8), _mm256_loadu_pd(b + i + 8), acc2);
    acc3 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 12), _mm256_loadu_pd(b + i + 12), acc3);
  }
  for (; i + 4 <= n; i += 4) acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  double s = hsum(_mm256_add_pd(_mm256_add_pd(acc0, acc1), _mm256_add_pd(acc2, acc3)));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

CPLA_AVX2 void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

// Four rows at a time so each load of x feeds four FMAs.
CPLA_AVX2 void dot4(const double* a, std::size_t stride, std::size_t n, const double* x, double* out) {
  const double* r0 = a;
  const double* r1 = a + stride;
  const double* r2 = a + 2 * stride;
  const double* r3 = a + 3 * stride;
  __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd(), s2 = _mm256_setzero_pd(), s3 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d xv = _mm256_loadu_pd(x + i);
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(r0 + i), xv, s0);
    s1 = _mm256_fmadd_pd(_mm256_loadu_pd(r1 + i), xv, s1);
    s2 = _mm256_fmadd_pd(_mm256_loadu_pd(r2 + i), xv, s2);
    s3 = _mm256_fmadd_pd(_mm256_loadu_pd(r3 + i), xv, s3);
  }
  double t0 = hsum(s0), t1 = hsum(s1), t2 = hsum(s2), t3 = hsum(s3);
  for (; i < n; ++i) {
    t0 += r0[i] * x[i];
    t1 += r1[i] * x[i];
    t2 += r2[i] * x[i];
    t3 += r3[i] * x[i];
  }
  out[0] = t0;
  out[1] = t1;
  out[2] = t2;
  out[3] = t3;
}

CPLA_AVX2 void gemv_rows(const double* a, std::size_t m, std::size_t n, std::size_t stride, const double* x,
                         double* out) {
  std::size_t r = 0;
  for (; r + 4 <= m; r += 4) dot4(a + r * stride, stride, n, x, out + r);
  for (; r < m; ++r) out[r] = dot(a + r * stride, x, n);
}

CPLA_AVX2 void residual_rows(const double* a, std::size_t m, std::size_t n, std::size_t stride, const double* x,
                             const double* u, double* out) {
  gemv_rows(a, m, n, stride, x, out);
  std::size_t r = 0;
  for (; r + 4 <= m; r += 4) _mm256_storeu_pd(out + r, _mm256_sub_pd(_mm256_loadu_pd(u + r), _mm256_loadu_pd(out + r)));
  for (; r < m; ++r) out[r] = u[r] - out[r];
}

}  // namespace

const KernelTable* avx2_kernels() {
  static const KernelTable table{"avx2", dot, axpy, gemv_rows, residual_rows};
  return &table;
}

bool cpu_supports_avx2() {
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}

#else

const KernelTable* avx2_kernels() { return nullptr; }
bool cpu_supports_avx2() { return false; }

#endif

}  // namespace cpla::simd
