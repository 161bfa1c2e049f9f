#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "bwc/engines.hpp"
#include "bwc/mel.hpp"

namespace bwc {

/// Length of the pooled feature vector: per-band mean then std.
inline constexpr std::size_t kPooledFeatures = 2 * MelConfig::kBins;

/// Logistic regression over standardized pooled log-mel features.
class LinearChunkScorer final : public FrameScorer {
 public:
  explicit LinearChunkScorer(std::string name = "reference_linear");

  const EngineDescriptor& descriptor() const override { return desc_; }
  double score_frames(const MelFeatures& features, const ChunkContext& context = {}) override;
  /// Score for an already pooled (unstandardized) feature vector.
  double score_pooled(std::span<const float> pooled) const;

  std::vector<double> weights;  // over standardized features
  double bias = 0.0;
  std::vector<double> feature_mean;
  std::vector<double> feature_scale;

  void save(const std::filesystem::path& path) const;
  static LinearChunkScorer load(const std::filesystem::path& path, std::string name = "reference_linear");
  std::string to_json() const;
  static LinearChunkScorer from_json(const std::string& text, std::string name = "reference_linear");

 private:
  EngineDescriptor desc_;
};

struct TrainConfig {
  std::size_t max_epochs = 500;
  double relative_tolerance = 1e-6;
  double learning_rate = 0.5;
  std::uint64_t seed = 0;
};

struct TrainReport {
  std::size_t epochs = 0;
  double final_loss = 0.0;
  double training_accuracy = 0.0;
};

/// Full-batch gradient descent on mean cross-entropy. Features are
/// standardized first; constant columns get unit scale. Labels are 1 for
/// officer. Throws PreconditionError unless both classes are present.
LinearChunkScorer train_chunk_scorer(std::span<const std::vector<float>> pooled, std::span<const int> labels,
                                     const TrainConfig& config, TrainReport* report = nullptr);

}  // namespace bwc
