#include "bwc/mel.hpp"

#include <cmath>
#include <mutex>

#include <fftw3.h>

#include "bwc/errors.hpp"
#include "bwc/kernels.hpp"

namespace bwc {

namespace {

std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

}  // namespace

struct MelExtractor::Plan {
  fftwf_plan plan = nullptr;
};

std::size_t mel_frame_count(std::size_t num_samples) {
  if (num_samples < MelConfig::kWindow) return 0;
  return (num_samples - MelConfig::kWindow) / MelConfig::kHop + 1;
}

std::pair<std::size_t, std::size_t> sample_range(const Segment& segment, int sample_rate) {
  const auto first = static_cast<std::size_t>(segment.start_ms() * sample_rate / 1000);
  const auto last = static_cast<std::size_t>(segment.end_ms() * sample_rate / 1000);
  return {first, last};
}

MelExtractor::MelExtractor() : plan_(new Plan) {
  constexpr std::size_t n_fft = MelConfig::kFft;
  constexpr std::size_t n_spec = MelConfig::kSpectrumBins;
  constexpr std::size_t n_mel = MelConfig::kBins;

  window_.resize(MelConfig::kWindow);
  for (std::size_t i = 0; i < window_.size(); ++i) {
    window_[i] = static_cast<float>(0.5 - 0.5 * std::cos(2.0 * M_PI * double(i) / double(window_.size())));
  }

  const double mel_lo = hz_to_mel(MelConfig::kMinHz);
  const double mel_hi = hz_to_mel(MelConfig::kMaxHz);
  std::vector<double> edges(n_mel + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * double(i) / double(n_mel + 1));
  }
  filters_.assign(n_mel * n_spec, 0.0f);
  centers_hz_.resize(n_mel);
  for (std::size_t m = 0; m < n_mel; ++m) {
    const double lo = edges[m], center = edges[m + 1], hi = edges[m + 2];
    centers_hz_[m] = center;
    for (std::size_t k = 0; k < n_spec; ++k) {
      const double f = double(k) * kSampleRate / double(n_fft);
      double w = 0.0;
      if (f > lo && f <= center) {
        w = (f - lo) / (center - lo);
      } else if (f > center && f < hi) {
        w = (hi - f) / (hi - center);
      }
      filters_[m * n_spec + k] = static_cast<float>(w);
    }
  }

  std::vector<float> in(n_fft);
  std::vector<fftwf_complex> out(n_spec);
  std::lock_guard lock(planner_mutex());
  plan_->plan = fftwf_plan_dft_r2c_1d(static_cast<int>(n_fft), in.data(), out.data(),
                                      FFTW_ESTIMATE | FFTW_UNALIGNED);
}

MelExtractor::~MelExtractor() {
  {
    std::lock_guard lock(planner_mutex());
    fftwf_destroy_plan(plan_->plan);
  }
  delete plan_;
}

MelFeatures MelExtractor::compute(std::span<const float> samples) const {
  const auto& k = simd::active_kernels();
  MelFeatures out;
  out.frames = mel_frame_count(samples.size());
  out.values.resize(out.frames * MelConfig::kBins);

  std::vector<float> frame(MelConfig::kFft, 0.0f);
  std::vector<fftwf_complex> spectrum(MelConfig::kSpectrumBins);
  std::vector<float> power(MelConfig::kSpectrumBins);
  for (std::size_t t = 0; t < out.frames; ++t) {
    const float* src = samples.data() + t * MelConfig::kHop;
    k.multiply(src, window_.data(), frame.data(), MelConfig::kWindow);
    fftwf_execute_dft_r2c(plan_->plan, frame.data(), spectrum.data());
    k.power_spectrum(reinterpret_cast<const float*>(spectrum.data()), power.data(), power.size());
    float* dst = out.values.data() + t * MelConfig::kBins;
    k.mat_vec(filters_.data(), MelConfig::kBins, MelConfig::kSpectrumBins, power.data(), dst);
    for (std::size_t b = 0; b < MelConfig::kBins; ++b) {
      dst[b] = std::log(std::max(dst[b], MelConfig::kLogFloor));
    }
  }
  return out;
}

MelFeatures MelExtractor::frame_mel(const Audio& audio, const Segment& segment) const {
  const auto [first, last] = sample_range(segment, audio.sample_rate);
  if (last > audio.samples.size()) {
    throw PreconditionError("segment [" + std::to_string(segment.start()) + ", " +
                            std::to_string(segment.end()) + "] runs past audio end " +
                            std::to_string(audio.duration()));
  }
  return compute(std::span<const float>(audio.samples).subspan(first, last - first));
}

std::vector<float> pool_mean_std(const MelFeatures& f) {
  std::vector<float> out(2 * f.bins, 0.0f);
  if (f.frames == 0) return out;
  for (std::size_t b = 0; b < f.bins; ++b) {
    double sum = 0.0, sq = 0.0;
    for (std::size_t t = 0; t < f.frames; ++t) {
      const double v = f.at(b, t);
      sum += v;
      sq += v * v;
    }
    const double mean = sum / double(f.frames);
    const double var = std::max(0.0, sq / double(f.frames) - mean * mean);
    out[b] = static_cast<float>(mean);
    out[f.bins + b] = static_cast<float>(std::sqrt(var));
  }
  return out;
}

}  // namespace bwc
