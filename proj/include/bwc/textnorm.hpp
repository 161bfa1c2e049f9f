#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace bwc {

/// Lowercase word tokens with no whitespace or bracket characters.
struct NormalizedText {
  std::vector<std::string> tokens;

  /// Tokens joined by single spaces.
  std::string char_string() const;
  bool empty() const noexcept { return tokens.empty(); }
  friend bool operator==(const NormalizedText&, const NormalizedText&) = default;
};

/// Removes every `[...]` span including the brackets (nesting aware). An
/// unmatched `[` removes through the end of the string. Whitespace runs
/// collapse to one space and the result is trimmed.
std::string strip_bracketed(std::string_view text);

/// Frozen normalizer used before every WER/CER computation:
///   lowercase ASCII; strip bracketed spans; characters outside
///   [a-z0-9'] become spaces (hyphens, punctuation, any non-ASCII byte);
///   an apostrophe survives only between two letters; split on spaces.
NormalizedText normalize(std::string_view text);

enum class ScrubMode {
  /// Every occurrence of a token whose total count exceeds the limit is dropped.
  remove_all,
  /// Consecutive runs longer than the limit are collapsed to one token.
  collapse_runs,
};

/// Hallucination scrub for model output. Tokens are whitespace-separated
/// and compared case-insensitively. Throws PreconditionError if limit < 1.
std::string scrub_repetitions(std::string_view text, int limit = 10,
                              ScrubMode mode = ScrubMode::remove_all);

std::vector<std::string> split_whitespace(std::string_view text);

}  // namespace bwc
