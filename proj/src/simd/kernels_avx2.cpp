#include "bwc/kernels.hpp"

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>

namespace bwc::simd {

namespace {

inline float hsum256(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  __m128 shuf = _mm_movehdup_ps(lo);
  __m128 sums = _mm_add_ps(lo, shuf);
  shuf = _mm_movehl_ps(shuf, sums);
  sums = _mm_add_ss(sums, shuf);
  return _mm_cvtss_f32(sums);
}

float dot_avx2(const float* a, const float* b, std::size_t n) {
  __m256 acc0 = _mm256_setzero_ps();
  __m256 acc1 = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
    acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 8), _mm256_loadu_ps(b + i + 8), acc1);
  }
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
  }
  float acc = hsum256(_mm256_add_ps(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void multiply_avx2(const float* a, const float* b, float* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(out + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void power_spectrum_avx2(const float* z, float* out, std::size_t bins) {
  std::size_t k = 0;
  for (; k + 8 <= bins; k += 8) {
    // Two loads of 4 complex values each, squared, then pairwise added.
    const __m256 v0 = _mm256_loadu_ps(z + 2 * k);
    const __m256 v1 = _mm256_loadu_ps(z + 2 * k + 8);
    const __m256 s0 = _mm256_mul_ps(v0, v0);
    const __m256 s1 = _mm256_mul_ps(v1, v1);
    // hadd interleaves 128-bit lanes: [s0 lo pairs, s1 lo pairs, s0 hi pairs, s1 hi pairs].
    const __m256 h = _mm256_hadd_ps(s0, s1);
    const __m256 ordered = _mm256_castpd_ps(
        _mm256_permute4x64_pd(_mm256_castps_pd(h), _MM_SHUFFLE(3, 1, 2, 0)));
    _mm256_storeu_ps(out + k, ordered);
  }
  for (; k < bins; ++k) out[k] = z[2 * k] * z[2 * k] + z[2 * k + 1] * z[2 * k + 1];
}

void axpy_avx2(float alpha, const float* x, float* y, std::size_t n) {
  const __m256 va = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

double sum_squares_avx2(const float* x, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 v = _mm256_loadu_ps(x + i);
    const __m256d lo = _mm256_cvtps_pd(_mm256_castps256_ps128(v));
    const __m256d hi = _mm256_cvtps_pd(_mm256_extractf128_ps(v, 1));
    acc0 = _mm256_fmadd_pd(lo, lo, acc0);
    acc1 = _mm256_fmadd_pd(hi, hi, acc1);
  }
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, _mm256_add_pd(acc0, acc1));
  double acc = lanes[0] + lanes[1] + lanes[2] + lanes[3];
  for (; i < n; ++i) acc += static_cast<double>(x[i]) * x[i];
  return acc;
}

void mat_vec_avx2(const float* mat, std::size_t rows, std::size_t cols, const float* x, float* out) {
  for (std::size_t r = 0; r < rows; ++r) out[r] = dot_avx2(mat + r * cols, x, cols);
}

}  // namespace

const KernelTable* avx2_kernels() {
  static const KernelTable table{"avx2",        dot_avx2,      multiply_avx2, power_spectrum_avx2,
                                 axpy_avx2,     sum_squares_avx2, mat_vec_avx2};
  static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return supported ? &table : nullptr;
}

}  // namespace bwc::simd

#else

namespace bwc::simd {
const KernelTable* avx2_kernels() { return nullptr; }
}  // namespace bwc::simd

#endif
