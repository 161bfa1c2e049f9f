#pragma once

#include <cstddef>

namespace bwc::simd {

/// Data-parallel inner loops. Every entry has a scalar reference version;
/// vector versions must agree with it to float rounding.
struct KernelTable {
  const char* name;
  float (*dot)(const float* a, const float* b, std::size_t n);
  /// out[i] = a[i] * b[i]
  void (*multiply)(const float* a, const float* b, float* out, std::size_t n);
  /// out[k] = re[k]^2 + im[k]^2 over interleaved (re, im) pairs.
  void (*power_spectrum)(const float* interleaved, float* out, std::size_t bins);
  /// y[i] += alpha * x[i]
  void (*axpy)(float alpha, const float* x, float* y, std::size_t n);
  /// Sum of x[i]^2 accumulated in double.
  double (*sum_squares)(const float* x, std::size_t n);
  /// out[r] = dot(mat[r, :], x) for a row-major rows x cols matrix.
  void (*mat_vec)(const float* mat, std::size_t rows, std::size_t cols, const float* x, float* out);
};

const KernelTable& scalar_kernels();

/// AVX2+FMA table, or nullptr when not compiled in or the CPU lacks it.
const KernelTable* avx2_kernels();

/// Table picked once at first use: AVX2 when available, scalar otherwise.
/// Setting BWC_SIMD=scalar in the environment forces the scalar table.
const KernelTable& active_kernels();

}  // namespace bwc::simd
