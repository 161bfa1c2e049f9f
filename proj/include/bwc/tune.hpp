#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bwc/detect.hpp"
#include "bwc/errors.hpp"

namespace bwc {

enum class TuneMode { gp_ei, random };
std::string_view to_string(TuneMode m);
TuneMode parse_tune_mode(std::string_view s);

struct TuneSpec {
  std::vector<double> lower;
  std::vector<double> upper;
  std::size_t budget = 20;
  std::size_t init_samples = 5;
  std::uint64_t seed = 0;
  TuneMode mode = TuneMode::gp_ei;

  /// Bounds for (t_vad, t_officer, t_smooth).
  static TuneSpec detector_defaults();
  /// Throws ValidationError on empty or inverted bounds or
  /// budget < init_samples < 1.
  void validate() const;
};

struct TracePoint {
  std::vector<double> point;
  double cost = 0.0;
  std::size_t iteration = 0;
};

struct TuneResult {
  std::vector<double> best;
  double best_cost = 0.0;
  std::vector<TracePoint> trace;
};

/// Raised when the objective throws; carries the offending point.
class ObjectiveError : public Error {
 public:
  ObjectiveError(std::vector<double> point, const std::string& message);
  const std::vector<double>& point() const noexcept { return point_; }

 private:
  std::vector<double> point_;
};

using Objective = std::function<double(std::span<const double>)>;

/// Minimizes `objective` over the box. GP mode: init_samples shifted
/// Halton points, then expected improvement under a fixed squared
/// exponential GP (length scale 0.2 of each box side, noise 1e-4) on
/// standardized costs. Random mode: budget uniform points. Returns the
/// best evaluated point; the trace holds every evaluation.
TuneResult optimize(const Objective& objective, const TuneSpec& spec);

DetectorThresholds thresholds_from_point(std::span<const double> point);

/// Precomputed chunk scores for one validation stop.
struct ValidationStop {
  const StopRecord* stop = nullptr;
  AudioRef audio;
  std::vector<ChunkScore> scores;
};

/// Mean detection WER over stops that have officer reference speech.
double mean_detection_wer(std::span<const ValidationStop> stops, Transcriber& transcriber,
                          const DetectorThresholds& th);

struct TunedDetector {
  DetectorThresholds thresholds;
  double cost = 0.0;
  TuneResult result;
};

/// Throws PreconditionError when no stop carries officer reference speech.
TunedDetector tune_detector(std::span<const ValidationStop> stops, Transcriber& transcriber, const TuneSpec& spec);

}  // namespace bwc
