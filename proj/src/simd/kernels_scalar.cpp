#include "bwc/kernels.hpp"

namespace bwc::simd {

namespace {

float dot_scalar(const float* a, const float* b, std::size_t n) {
  float acc = 0.0f;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void multiply_scalar(const float* a, const float* b, float* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void power_spectrum_scalar(const float* z, float* out, std::size_t bins) {
  for (std::size_t k = 0; k < bins; ++k) out[k] = z[2 * k] * z[2 * k] + z[2 * k + 1] * z[2 * k + 1];
}

void axpy_scalar(float alpha, const float* x, float* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

double sum_squares_scalar(const float* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(x[i]) * x[i];
  return acc;
}

void mat_vec_scalar(const float* mat, std::size_t rows, std::size_t cols, const float* x, float* out) {
  for (std::size_t r = 0; r < rows; ++r) out[r] = dot_scalar(mat + r * cols, x, cols);
}

}  // namespace

const KernelTable& scalar_kernels() {
  static const KernelTable table{"scalar",      dot_scalar,         multiply_scalar,
                                 power_spectrum_scalar, axpy_scalar, sum_squares_scalar,
                                 mat_vec_scalar};
  return table;
}

}  // namespace bwc::simd
