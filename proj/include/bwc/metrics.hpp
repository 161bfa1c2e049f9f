#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "bwc/corpus.hpp"
#include "bwc/textnorm.hpp"

namespace bwc {

struct EditCounts {
  std::size_t substitutions = 0;
  std::size_t deletions = 0;
  std::size_t insertions = 0;
  std::size_t reference_length = 0;

  std::size_t errors() const noexcept { return substitutions + deletions + insertions; }
  EditCounts& operator+=(const EditCounts& o) noexcept {
    substitutions += o.substitutions;
    deletions += o.deletions;
    insertions += o.insertions;
    reference_length += o.reference_length;
    return *this;
  }
  friend bool operator==(const EditCounts&, const EditCounts&) = default;
};

struct WerScore {
  double value = 0.0;
  EditCounts counts;
  /// Reference was empty but the hypothesis was not; value holds the raw
  /// insertion count.
  bool degenerate = false;
};

namespace detail {

// Cheap first-byte reject before the full compare; most token pairs differ early.
inline bool same_token(const std::string& a, const std::string& b) noexcept {
  return a.size() == b.size() && (a.empty() || (a[0] == b[0] && a == b));
}
inline bool same_token(char a, char b) noexcept { return a == b; }
inline bool same_token(std::uint32_t a, std::uint32_t b) noexcept { return a == b; }

/// Unit-cost Levenshtein alignment. Traceback prefers
/// match > substitution > deletion > insertion so the S/D/I split is
/// deterministic among minimal alignments.
template <typename T>
EditCounts edit_alignment_impl(std::span<const T> ref, std::span<const T> hyp) {
  const std::size_t n = ref.size(), m = hyp.size();
  const std::size_t w = m + 1;
  // Short utterances are the common case; keep their table on the stack.
  constexpr std::size_t kStackCells = 1024;
  std::array<std::uint32_t, kStackCells> stack_cells;
  std::vector<std::uint32_t> heap_cells;
  std::uint32_t* d = stack_cells.data();
  if ((n + 1) * w > kStackCells) {
    heap_cells.resize((n + 1) * w);
    d = heap_cells.data();
  }
  for (std::size_t i = 0; i <= n; ++i) d[i * w] = static_cast<std::uint32_t>(i);
  for (std::size_t j = 0; j <= m; ++j) d[j] = static_cast<std::uint32_t>(j);
  for (std::size_t i = 1; i <= n; ++i) {
    const std::uint32_t* above = d + (i - 1) * w;
    std::uint32_t* row = d + i * w;
    // Carry left and diagonal in registers; reloading them serializes the row.
    std::uint32_t left = row[0], diag = above[0];
    for (std::size_t j = 1; j <= m; ++j) {
      const std::uint32_t up = above[j];
      const std::uint32_t sub = diag + (same_token(ref[i - 1], hyp[j - 1]) ? 0u : 1u);
      const std::uint32_t gap = (up < left ? up : left) + 1;
      left = sub < gap ? sub : gap;
      row[j] = left;
      diag = up;
    }
  }
  EditCounts c;
  c.reference_length = n;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    const std::uint32_t here = d[i * w + j];
    if (i > 0 && j > 0 && same_token(ref[i - 1], hyp[j - 1]) && d[(i - 1) * w + j - 1] == here) {
      --i, --j;
    } else if (i > 0 && j > 0 && d[(i - 1) * w + j - 1] + 1 == here) {
      ++c.substitutions;
      --i, --j;
    } else if (i > 0 && d[(i - 1) * w + j] + 1 == here) {
      ++c.deletions;
      --i;
    } else {
      ++c.insertions;
      --j;
    }
  }
  return c;
}

}  // namespace detail

EditCounts edit_alignment(std::span<const std::string> ref, std::span<const std::string> hyp);
EditCounts edit_alignment(std::string_view ref_chars, std::string_view hyp_chars);

/// Error value (S+D+I)/N with the empty-reference convention: 0 when both
/// sides are empty, otherwise the insertion count flagged degenerate.
WerScore score_from_counts(const EditCounts& counts);

/// Reference is bracket-stripped and normalized. The hypothesis is
/// repetition-scrubbed first, then normalized.
NormalizedText prepare_reference(std::string_view ref);
NormalizedText prepare_hypothesis(std::string_view hyp);

WerScore wer(std::string_view ref, std::string_view hyp);
WerScore cer(std::string_view ref, std::string_view hyp);
/// (D+I)/N over the same alignment `wer` uses, so it never exceeds wer.
WerScore wer_no_subs(std::string_view ref, std::string_view hyp);

/// Lowest WER across hypotheses and the first index achieving it. Throws
/// PreconditionError when hyps is empty.
std::pair<WerScore, std::size_t> min_wer(std::string_view ref, std::span<const std::string> hyps);

using TimedText = std::pair<Segment, std::string>;

/// Joins each side in temporal order and scores the joined token streams;
/// hypothesis segments are scrubbed individually before joining. Throws
/// PreconditionError when either list is not sorted by start.
WerScore concat_wer(std::span<const TimedText> ref_segments, std::span<const TimedText> hyp_segments);
std::string concat_text(std::span<const TimedText> segments);

}  // namespace bwc
