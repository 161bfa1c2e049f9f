#include <doctest.h>

#include <cmath>

#include "bwc/errors.hpp"
#include "bwc/mel.hpp"

using namespace bwc;

namespace {

Audio tone(double hz, double seconds, double amp = 0.3) {
  Audio a;
  a.samples.resize(static_cast<std::size_t>(seconds * kSampleRate));
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    a.samples[i] = static_cast<float>(amp * std::sin(2.0 * M_PI * hz * double(i) / kSampleRate));
  }
  return a;
}

}  // namespace

TEST_CASE("frame counts") {
  CHECK(mel_frame_count(0) == 0);
  CHECK(mel_frame_count(399) == 0);
  CHECK(mel_frame_count(400) == 1);
  CHECK(mel_frame_count(560) == 2);
  CHECK(mel_frame_count(4000) == 23);  // one 250 ms chunk
}

TEST_CASE("filterbank centers increase and stay in band") {
  MelExtractor mel;
  const auto& c = mel.center_hz();
  REQUIRE(c.size() == MelConfig::kBins);
  for (std::size_t i = 1; i < c.size(); ++i) CHECK(c[i] > c[i - 1]);
  CHECK(c.front() > 0.0);
  CHECK(c.back() < 8000.0);
}

TEST_CASE("a pure tone peaks in the nearest mel bin") {
  MelExtractor mel;
  for (double hz : {300.0, 1000.0, 3000.0}) {
    const auto a = tone(hz, 0.5);
    const auto f = mel.compute(a.samples);
    REQUIRE(f.frames > 10);
    std::size_t best = 0;
    for (std::size_t b = 1; b < f.bins; ++b) {
      if (f.at(b, 5) > f.at(best, 5)) best = b;
    }
    const auto& c = mel.center_hz();
    std::size_t nearest = 0;
    for (std::size_t b = 1; b < c.size(); ++b) {
      if (std::abs(c[b] - hz) < std::abs(c[nearest] - hz)) nearest = b;
    }
    CHECK(std::abs(int(best) - int(nearest)) <= 1);
  }
}

TEST_CASE("silence hits the log floor") {
  MelExtractor mel;
  Audio a;
  a.samples.assign(8000, 0.0f);
  const auto f = mel.compute(a.samples);
  for (float v : f.values) CHECK(v == doctest::Approx(std::log(MelConfig::kLogFloor)));
}

TEST_CASE("frame_mel slices by segment and checks bounds") {
  MelExtractor mel;
  const auto a = tone(500, 1.0);
  const auto f = mel.frame_mel(a, Segment::from_millis(100, 350));
  CHECK(f.frames == 23);
  // Hop-aligned start: slice equals the corresponding frames of the full pass.
  const auto full = mel.compute(a.samples);
  for (std::size_t t = 0; t < f.frames; ++t) {
    for (std::size_t b = 0; b < f.bins; ++b) CHECK(f.at(b, t) == full.at(b, t + 10));
  }
  CHECK_THROWS_AS(mel.frame_mel(a, Segment::from_millis(900, 1100)), PreconditionError);
}

TEST_CASE("pool_mean_std") {
  MelFeatures f;
  f.frames = 2;
  f.values.assign(2 * f.bins, 0.0f);
  f.values[0] = 1.0f;
  f.values[f.bins] = 3.0f;
  const auto p = pool_mean_std(f);
  REQUIRE(p.size() == 2 * f.bins);
  CHECK(p[0] == doctest::Approx(2.0));
  CHECK(p[f.bins] == doctest::Approx(1.0));
  CHECK(p[1] == 0.0f);
  MelFeatures empty;
  CHECK(pool_mean_std(empty) == std::vector<float>(2 * empty.bins, 0.0f));
}
