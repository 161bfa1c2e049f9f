#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <cstring>

#include "bwc/kernels.hpp"
#include "bwc/rng.hpp"

using namespace bwc;

namespace {

std::vector<float> random_vec(Rng& rng, std::size_t n) {
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-2.0, 2.0));
  return v;
}

// Relative tolerance for float reductions reordered across lanes.
bool close(double a, double b, double scale) { return std::abs(a - b) <= 1e-5 * (1.0 + scale); }

}  // namespace

TEST_CASE("scalar kernels compute the obvious things") {
  const auto& k = simd::scalar_kernels();
  const float a[3] = {1, 2, 3}, b[3] = {4, 5, 6};
  CHECK(k.dot(a, b, 3) == 32.0f);
  float out[3];
  k.multiply(a, b, out, 3);
  CHECK(out[2] == 18.0f);
  float y[3] = {1, 1, 1};
  k.axpy(2.0f, a, y, 3);
  CHECK(y[1] == 5.0f);
  CHECK(k.sum_squares(a, 3) == 14.0);
  const float spec[4] = {3, 4, 1, 1};
  float p[2];
  k.power_spectrum(spec, p, 2);
  CHECK(p[0] == 25.0f);
  CHECK(p[1] == 2.0f);
  const float m[6] = {1, 0, 2, 0, 1, 1};
  float mv[2];
  k.mat_vec(m, 2, 3, a, mv);
  CHECK(mv[0] == 7.0f);
  CHECK(mv[1] == 5.0f);
}

TEST_CASE("avx2 kernels match scalar on odd lengths") {
  const auto* avx = simd::avx2_kernels();
  if (avx == nullptr) {
    MESSAGE("AVX2 unavailable on this CPU; equivalence test skipped");
    return;
  }
  const auto& sc = simd::scalar_kernels();
  Rng rng(17);
  for (std::size_t n : {0u, 1u, 3u, 7u, 8u, 9u, 15u, 16u, 17u, 31u, 64u, 257u, 400u, 1001u}) {
    const auto a = random_vec(rng, n), b = random_vec(rng, n);
    CHECK(close(avx->dot(a.data(), b.data(), n), sc.dot(a.data(), b.data(), n), double(n)));
    CHECK(close(avx->sum_squares(a.data(), n), sc.sum_squares(a.data(), n), double(n)));
    std::vector<float> o1(n), o2(n);
    avx->multiply(a.data(), b.data(), o1.data(), n);
    sc.multiply(a.data(), b.data(), o2.data(), n);
    CHECK(o1 == o2);
    auto y1 = b, y2 = b;
    avx->axpy(0.37f, a.data(), y1.data(), n);
    sc.axpy(0.37f, a.data(), y2.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(close(y1[i], y2[i], 1.0));
    const auto spec = random_vec(rng, 2 * n);
    std::vector<float> p1(n), p2(n);
    avx->power_spectrum(spec.data(), p1.data(), n);
    sc.power_spectrum(spec.data(), p2.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(close(p1[i], p2[i], 1.0));
  }
  for (std::size_t rows : {1u, 5u, 64u}) {
    for (std::size_t cols : {1u, 9u, 257u}) {
      const auto m = random_vec(rng, rows * cols), x = random_vec(rng, cols);
      std::vector<float> o1(rows), o2(rows);
      avx->mat_vec(m.data(), rows, cols, x.data(), o1.data());
      sc.mat_vec(m.data(), rows, cols, x.data(), o2.data());
      for (std::size_t r = 0; r < rows; ++r) CHECK(close(o1[r], o2[r], double(cols)));
    }
  }
}

TEST_CASE("active kernels respect the BWC_SIMD override") {
  const char* env = std::getenv("BWC_SIMD");
  const auto& k = simd::active_kernels();
  if (env != nullptr && std::strcmp(env, "scalar") == 0) {
    CHECK(std::strcmp(k.name, "scalar") == 0);
  } else if (simd::avx2_kernels() != nullptr) {
    CHECK(std::strcmp(k.name, simd::avx2_kernels()->name) == 0);
  }
}
