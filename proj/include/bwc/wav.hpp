#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace bwc {

inline constexpr int kSampleRate = 16000;

/// Mono audio as floats in [-1, 1).
struct Audio {
  int sample_rate = kSampleRate;
  std::vector<float> samples;

  double duration() const noexcept {
    return static_cast<double>(samples.size()) / static_cast<double>(sample_rate);
  }
  std::int64_t duration_ms() const noexcept {
    return static_cast<std::int64_t>(samples.size()) * 1000 / sample_rate;
  }
};

/// Reads 16-bit PCM mono 16 kHz WAV. Any other layout or rate is an
/// IoError; resampling is not supported.
Audio read_wav(const std::filesystem::path& path);

/// Writes 16-bit PCM mono. Samples are rounded and clipped to int16.
void write_wav(const std::filesystem::path& path, std::span<const float> samples,
               int sample_rate = kSampleRate);

std::int16_t to_pcm16(float x) noexcept;

}  // namespace bwc
