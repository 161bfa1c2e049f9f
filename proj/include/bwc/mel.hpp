#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "bwc/corpus.hpp"
#include "bwc/wav.hpp"

namespace bwc {

struct MelConfig {
  static constexpr std::size_t kBins = 64;
  static constexpr std::size_t kWindow = 400;  // 25 ms at 16 kHz
  static constexpr std::size_t kHop = 160;     // 10 ms
  static constexpr std::size_t kFft = 512;
  static constexpr std::size_t kSpectrumBins = kFft / 2 + 1;
  static constexpr double kMinHz = 0.0;
  static constexpr double kMaxHz = 8000.0;
  static constexpr float kLogFloor = 1e-10f;
};

/// Log mel energies, `bins` x `frames`, stored frame-major.
struct MelFeatures {
  std::size_t bins = MelConfig::kBins;
  std::size_t frames = 0;
  std::vector<float> values;

  float at(std::size_t bin, std::size_t frame) const { return values[frame * bins + bin]; }
  std::span<const float> frame(std::size_t t) const {
    return std::span<const float>(values).subspan(t * bins, bins);
  }
};

/// floor((n - window) / hop) + 1 frames without padding; 0 if n < window.
std::size_t mel_frame_count(std::size_t num_samples);

/// 64-band log-mel front end: periodic Hann window, 512-point FFT, power
/// spectrum, HTK-scale triangular filters over 0-8000 Hz with unit peaks,
/// natural log with a 1e-10 floor.
class MelExtractor {
 public:
  MelExtractor();
  ~MelExtractor();
  MelExtractor(const MelExtractor&) = delete;
  MelExtractor& operator=(const MelExtractor&) = delete;

  /// Frames laid from the first sample; trailing samples that do not fill
  /// a window are ignored.
  MelFeatures compute(std::span<const float> samples) const;

  /// Features for `segment` of `audio`. Throws PreconditionError when the
  /// segment runs past the end of the audio.
  MelFeatures frame_mel(const Audio& audio, const Segment& segment) const;

  /// Center frequency of each band in Hz.
  const std::vector<double>& center_hz() const noexcept { return centers_hz_; }
  /// Row-major kBins x kSpectrumBins filter weights.
  const std::vector<float>& filterbank() const noexcept { return filters_; }

 private:
  struct Plan;
  Plan* plan_;
  std::vector<float> window_;
  std::vector<float> filters_;
  std::vector<double> centers_hz_;
};

/// Per-band mean and standard deviation over frames: 2 * bins values,
/// means first.
std::vector<float> pool_mean_std(const MelFeatures& features);

/// Sample range [first, last) covered by a segment at the audio's rate.
std::pair<std::size_t, std::size_t> sample_range(const Segment& segment, int sample_rate = kSampleRate);

}  // namespace bwc
