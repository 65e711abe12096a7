#include <string_view>

#include "cfp/simd/kernels.hpp"

namespace cfp::simd {

#if defined(CFP_HAVE_AVX2_TU)
const KernelTable& avx2_kernel_table();
#endif

const KernelTable* avx2_kernels() {
#if defined(CFP_HAVE_AVX2_TU) && (defined(__GNUC__) || defined(__clang__))
  static const bool supported = [] {
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  }();
  if (supported) return &avx2_kernel_table();
#endif
  return nullptr;
}

const KernelTable& select_kernels(std::string_view request) {
  if (request == "scalar") return scalar_kernels();
  if (const KernelTable* t = avx2_kernels()) return *t;
  return scalar_kernels();
}

const KernelTable& kernels() {
  static const KernelTable& table = select_kernels({});
  return table;
}

}  // namespace cfp::simd
