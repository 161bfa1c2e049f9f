#include <doctest.h>

#include "bwc/errors.hpp"
#include "bwc/rng.hpp"
#include "bwc/scorer.hpp"
#include "test_helpers.hpp"

using namespace bwc;

namespace {

// Two Gaussian blobs separated along the first few features.
void blobs(std::size_t n, std::uint64_t seed, std::vector<std::vector<float>>& x, std::vector<int>& y) {
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    std::vector<float> v(kPooledFeatures);
    for (std::size_t d = 0; d < v.size(); ++d) {
      v[d] = static_cast<float>(rng.normal() * 2.0 + (d < 4 ? (label ? 3.0 : -3.0) : 0.0) - 10.0);
    }
    v[10] = 5.0f;  // constant column
    x.push_back(std::move(v));
    y.push_back(label);
  }
}

}  // namespace

TEST_CASE("training separates linearly separable data") {
  std::vector<std::vector<float>> x;
  std::vector<int> y;
  blobs(2000, 1, x, y);
  TrainReport report;
  TrainConfig cfg;
  cfg.seed = 3;
  const auto s = train_chunk_scorer(x, y, cfg, &report);
  CHECK(report.epochs > 0);
  CHECK(report.epochs <= cfg.max_epochs);
  CHECK(report.training_accuracy > 0.97);
  CHECK(s.feature_scale[10] == 1.0);
  std::vector<std::vector<float>> hx;
  std::vector<int> hy;
  blobs(400, 2, hx, hy);
  std::size_t right = 0;
  for (std::size_t i = 0; i < hx.size(); ++i) {
    const double p = s.score_pooled(hx[i]);
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
    right += (p > 0.5) == (hy[i] == 1);
  }
  CHECK(double(right) / double(hx.size()) > 0.97);

  const auto again = train_chunk_scorer(x, y, cfg);
  CHECK(again.weights == s.weights);
}

TEST_CASE("training rejects degenerate input") {
  std::vector<std::vector<float>> x(4, std::vector<float>(kPooledFeatures, 0.0f));
  const std::vector<int> same{1, 1, 1, 1};
  CHECK_THROWS_AS(train_chunk_scorer(x, same, {}), PreconditionError);
  const std::vector<int> short_labels{0, 1};
  CHECK_THROWS_AS(train_chunk_scorer(x, short_labels, {}), PreconditionError);
}

TEST_CASE("json round trip preserves scores") {
  std::vector<std::vector<float>> x;
  std::vector<int> y;
  blobs(200, 5, x, y);
  const auto s = train_chunk_scorer(x, y, {});
  const auto dir = testing::temp_dir("scorer");
  s.save(dir / "m.json");
  const auto back = LinearChunkScorer::load(dir / "m.json");
  for (const auto& v : x) CHECK(back.score_pooled(v) == doctest::Approx(s.score_pooled(v)).epsilon(1e-12));
  CHECK(back.to_json() == s.to_json());
  CHECK_THROWS_AS(LinearChunkScorer::from_json(R"({"kind":"other"})"), Error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("score_frames pools mel features and checks shape") {
  LinearChunkScorer s;
  s.weights.assign(kPooledFeatures, 0.0);
  s.weights[0] = 1.0;
  s.feature_mean.assign(kPooledFeatures, 0.0);
  s.feature_scale.assign(kPooledFeatures, 1.0);
  MelFeatures f;
  f.frames = 2;
  f.values.assign(2 * f.bins, 0.0f);
  f.values[0] = 2.0f;
  f.values[f.bins] = 2.0f;
  CHECK(s.score_frames(f) == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))));
  MelFeatures wrong;
  wrong.bins = 40;
  wrong.frames = 1;
  wrong.values.assign(40, 0.0f);
  CHECK_THROWS_AS(s.score_frames(wrong), EngineError);
}
