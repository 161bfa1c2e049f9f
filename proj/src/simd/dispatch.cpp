#include <cstdlib>
#include <string_view>

#include "bwc/kernels.hpp"

namespace bwc::simd {

const KernelTable& active_kernels() {
  static const KernelTable& table = [] () -> const KernelTable& {
    const char* force = std::getenv("BWC_SIMD");
    if (force != nullptr && std::string_view(force) == "scalar") return scalar_kernels();
    if (const auto* avx = avx2_kernels()) return *avx;
    return scalar_kernels();
  }();
  return table;
}

}  // namespace bwc::simd
