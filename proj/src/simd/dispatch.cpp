#include <cstdlib>
#include <string_view>

#include <spdlog/spdlog.h>

#include "cpla/simd/kernels.hpp"

namespace cpla::simd {
namespace {

const KernelTable& select() {
  const KernelTable* avx2 = cpu_supports_avx2() ? avx2_kernels() : nullptr;
  if (const char* env = std::getenv("CPLA_SIMD")) {
    const std::string_view want(env);
    if (want == "scalar") return scalar_kernels();
    if (want == "avx2") {
      if (avx2) return *avx2;
      spdlog::warn("CPLA_SIMD=avx2 requested but the CPU lacks AVX2/FMA; using scalar kernels");
      return scalar_kernels();
    }
    spdlog::warn("ignoring unknown CPLA_SIMD value '{}'", want);
  }
  return avx2 ? *avx2 : scalar_kernels();
}

}  // namespace

const KernelTable& active_kernels() {
  static const KernelTable& table = select();
  return table;
}

}  // namespace cpla::simd
