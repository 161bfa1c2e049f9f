#include <doctest.h>

#include <cmath>
#include <fstream>

#include "bwc/errors.hpp"
#include "bwc/wav.hpp"
#include "test_helpers.hpp"

using namespace bwc;

TEST_CASE("pcm16 conversion clips and rounds") {
  CHECK(to_pcm16(0.0f) == 0);
  CHECK(to_pcm16(1.0f) == 32767);
  CHECK(to_pcm16(2.0f) == 32767);
  CHECK(to_pcm16(-1.0f) == -32768);
  CHECK(to_pcm16(-5.0f) == -32768);
}

TEST_CASE("wav round trip within quantization") {
  const auto dir = testing::temp_dir("wav");
  std::vector<float> x(16000);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.5f * std::sin(0.01f * static_cast<float>(i));
  write_wav(dir / "a.wav", x);
  const auto a = read_wav(dir / "a.wav");
  CHECK(a.sample_rate == kSampleRate);
  REQUIRE(a.samples.size() == x.size());
  CHECK(a.duration_ms() == 1000);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(a.samples[i] - x[i]) < 1.0f / 32767.0f);
  std::filesystem::remove_all(dir);
}

TEST_CASE("bad wav files are rejected") {
  const auto dir = testing::temp_dir("wav-bad");
  {
    std::ofstream out(dir / "junk.wav", std::ios::binary);
    out << "this is not a riff file at all, nope";
  }
  CHECK_THROWS_AS(read_wav(dir / "junk.wav"), Error);
  CHECK_THROWS_AS(read_wav(dir / "nope.wav"), IoError);
  std::vector<float> x(100, 0.1f);
  write_wav(dir / "r8k.wav", x, 8000);
  CHECK_THROWS_AS(read_wav(dir / "r8k.wav"), Error);
  std::filesystem::remove_all(dir);
}
