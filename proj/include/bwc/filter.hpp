#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "bwc/corpus.hpp"

namespace bwc {

enum class CriterionId { c1, c2, c3, c4 };

std::string_view to_string(CriterionId c);
CriterionId parse_criterion(std::string_view s);

struct FilterCriterion {
  CriterionId id = CriterionId::c3;
  double min_duration_s = 0.5;
  double max_duration_s = 10.0;
  double wer_cap = 0.50;
  double no_subs_cap = 0.10;
  double strict_wer_cap = 0.10;  // c4

  /// Throws ValidationError unless parameters are positive and
  /// no_subs_cap <= wer_cap.
  void validate() const;
};

FilterCriterion make_criterion(CriterionId id);

/// Scores an utterance carries into filtering, taken from its chosen
/// alignment.
struct UtteranceScores {
  std::optional<double> min_wer;
  std::optional<double> min_no_subs;
};

/// c1: 0.5 <= duration <= 10
/// c2: c1 and min_wer <= 0.50
/// c3: c1 and min_no_subs < 0.10 and min_wer < 0.50
/// c4: c1 and min_wer < 0.10
/// Throws PreconditionError when a needed score is missing.
bool passes(const FilterCriterion& criterion, double duration_s, const UtteranceScores& scores);

struct FilterStats {
  std::size_t input_utterances = 0;
  /// Kept count and speech hours under each of c1..c4, for side-by-side
  /// comparison regardless of which criterion was applied.
  std::array<std::size_t, 4> kept{};
  std::array<double, 4> kept_hours{};
  CriterionId applied = CriterionId::c3;
};

struct FilterResult {
  Manifest kept;
  Manifest dropped;
  FilterStats stats;
};

/// Partitions every utterance by `passes`. Utterances without a segment
/// fail every criterion. Scores are keyed by (stop_id, utterance id).
using ScoreTable = std::map<std::pair<std::string, std::string>, UtteranceScores>;

FilterResult filter_manifest(const Manifest& aligned, const ScoreTable& scores,
                             const FilterCriterion& criterion);

}  // namespace bwc
