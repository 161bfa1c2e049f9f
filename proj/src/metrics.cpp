#include "bwc/metrics.hpp"

#include <algorithm>
#include <array>
#include <cstdint>

#include "bwc/errors.hpp"

namespace bwc {

EditCounts edit_alignment(std::span<const std::string> ref, std::span<const std::string> hyp) {
  // Short inputs: intern tokens to small ints so the DP compares integers.
  constexpr std::size_t kInternMax = 128;
  const std::size_t n = ref.size(), m = hyp.size();
  if (n + m > kInternMax) return detail::edit_alignment_impl<std::string>(ref, hyp);
  std::array<const std::string*, kInternMax> distinct;
  std::array<std::uint32_t, kInternMax> ids;
  std::size_t kinds = 0;
  for (std::size_t i = 0; i < n + m; ++i) {
    const std::string& t = i < n ? ref[i] : hyp[i - n];
    std::size_t k = 0;
    while (k < kinds && !detail::same_token(*distinct[k], t)) ++k;
    if (k == kinds) distinct[kinds++] = &t;
    ids[i] = static_cast<std::uint32_t>(k);
  }
  const std::span<const std::uint32_t> all(ids.data(), n + m);
  return detail::edit_alignment_impl<std::uint32_t>(all.first(n), all.subspan(n));
}

EditCounts edit_alignment(std::string_view ref_chars, std::string_view hyp_chars) {
  return detail::edit_alignment_impl<char>(std::span<const char>(ref_chars.data(), ref_chars.size()),
                                           std::span<const char>(hyp_chars.data(), hyp_chars.size()));
}

WerScore score_from_counts(const EditCounts& counts) {
  WerScore s;
  s.counts = counts;
  if (counts.reference_length == 0) {
    s.value = static_cast<double>(counts.insertions);
    s.degenerate = counts.insertions > 0;
  } else {
    s.value = static_cast<double>(counts.errors()) / static_cast<double>(counts.reference_length);
  }
  return s;
}

NormalizedText prepare_reference(std::string_view ref) { return normalize(ref); }

NormalizedText prepare_hypothesis(std::string_view hyp) {
  return normalize(scrub_repetitions(hyp));
}

WerScore wer(std::string_view ref, std::string_view hyp) {
  const auto r = prepare_reference(ref);
  const auto h = prepare_hypothesis(hyp);
  return score_from_counts(edit_alignment(r.tokens, h.tokens));
}

WerScore cer(std::string_view ref, std::string_view hyp) {
  const auto r = prepare_reference(ref).char_string();
  const auto h = prepare_hypothesis(hyp).char_string();
  return score_from_counts(edit_alignment(std::string_view(r), std::string_view(h)));
}

WerScore wer_no_subs(std::string_view ref, std::string_view hyp) {
  WerScore full = wer(ref, hyp);
  const auto& c = full.counts;
  WerScore s;
  s.counts = c;
  if (c.reference_length == 0) {
    s.value = static_cast<double>(c.insertions);
    s.degenerate = c.insertions > 0;
  } else {
    s.value = static_cast<double>(c.deletions + c.insertions) / static_cast<double>(c.reference_length);
  }
  return s;
}

std::pair<WerScore, std::size_t> min_wer(std::string_view ref, std::span<const std::string> hyps) {
  if (hyps.empty()) throw PreconditionError("min_wer needs at least one hypothesis");
  std::pair<WerScore, std::size_t> best{wer(ref, hyps[0]), 0};
  for (std::size_t i = 1; i < hyps.size(); ++i) {
    auto s = wer(ref, hyps[i]);
    if (s.value < best.first.value) best = {s, i};
  }
  return best;
}

std::string concat_text(std::span<const TimedText> segments) {
  std::string out;
  for (const auto& [seg, text] : segments) {
    if (text.empty()) continue;
    if (!out.empty()) out.push_back(' ');
    out += text;
  }
  return out;
}

WerScore concat_wer(std::span<const TimedText> ref_segments, std::span<const TimedText> hyp_segments) {
  const auto sorted = [](std::span<const TimedText> v) {
    return std::is_sorted(v.begin(), v.end(), [](const TimedText& a, const TimedText& b) {
      return a.first.start_ms() < b.first.start_ms();
    });
  };
  if (!sorted(ref_segments)) throw PreconditionError("reference segments are not sorted by start");
  if (!sorted(hyp_segments)) throw PreconditionError("hypothesis segments are not sorted by start");
  // Each hypothesis segment is one model output, so it is scrubbed on its
  // own; scrubbing the joined text would remove common words stop-wide.
  NormalizedText hyp;
  for (const auto& [seg, text] : hyp_segments) {
    auto part = prepare_hypothesis(text);
    hyp.tokens.insert(hyp.tokens.end(), part.tokens.begin(), part.tokens.end());
  }
  const auto ref = prepare_reference(concat_text(ref_segments));
  return score_from_counts(edit_alignment(ref.tokens, hyp.tokens));
}

}  // namespace bwc
