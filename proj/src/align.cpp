#include "bwc/align.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <tuple>

#include "bwc/metrics.hpp"
#include "bwc/textnorm.hpp"

namespace bwc {

namespace {

constexpr std::array<std::string_view, kAlignMethodCount> kMethodNames{
    "unaligned", "mfa", "mfa_chunked", "w2v2", "w2v2_chunked"};

constexpr std::int64_t kPadMs = 250;

}  // namespace

std::string_view to_string(AlignMethod m) { return kMethodNames[static_cast<std::size_t>(m)]; }

AlignMethod parse_align_method(std::string_view s) {
  for (std::size_t i = 0; i < kMethodNames.size(); ++i) {
    if (kMethodNames[i] == s) return static_cast<AlignMethod>(i);
  }
  throw ValidationError("unknown alignment method '" + std::string(s) + "'");
}

std::vector<std::optional<Segment>> heuristic_timestamps(std::span<const Utterance> utterances,
                                                         std::int64_t audio_duration_ms) {
  std::vector<std::optional<Segment>> out(utterances.size());
  std::optional<std::int64_t> prev_start;
  for (std::size_t i = 0; i < utterances.size(); ++i) {
    const auto& u = utterances[i];
    if (!u.raw_start_s) continue;
    std::int64_t start = *u.raw_start_s;
    if (prev_start && start < *prev_start) start = *prev_start;
    prev_start = start;

    std::int64_t end = 0;
    if (u.raw_end_s) {
      end = *u.raw_end_s;
    } else {
      end = start + 1;
      for (std::size_t j = i + 1; j < utterances.size(); ++j) {
        if (utterances[j].raw_start_s) {
          end = *utterances[j].raw_start_s;
          break;
        }
      }
    }
    if (end < start) end = start + 1;

    const std::int64_t lo = std::max<std::int64_t>(0, start * 1000 - kPadMs);
    const std::int64_t hi = std::min<std::int64_t>(audio_duration_ms, end * 1000 + kPadMs);
    if (hi > lo) out[i] = Segment::from_millis(lo, hi);
  }
  return out;
}

std::vector<UtteranceChunk> chunk_utterances(std::span<const Segment> segments, double max_len_s) {
  const auto max_ms = static_cast<std::int64_t>(std::llround(max_len_s * 1000.0));
  std::vector<UtteranceChunk> chunks;
  std::vector<std::size_t> members;
  std::int64_t total = 0;
  const auto flush = [&] {
    if (members.empty()) return;
    std::int64_t lo = segments[members.front()].start_ms();
    std::int64_t hi = segments[members.front()].end_ms();
    for (auto m : members) {
      lo = std::min(lo, segments[m].start_ms());
      hi = std::max(hi, segments[m].end_ms());
    }
    chunks.push_back({members, Segment::from_millis(lo, hi)});
    members.clear();
    total = 0;
  };
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto d = segments[i].duration_ms();
    if (!members.empty() && total + d > max_ms) flush();
    members.push_back(i);
    total += d;
  }
  flush();
  return chunks;
}

std::vector<std::optional<Segment>> split_chunk_by_words(std::span<const std::size_t> token_counts,
                                                         std::span<const WordTiming> words) {
  std::size_t total = 0;
  for (auto c : token_counts) total += c;
  if (total != words.size()) {
    throw EngineError(EngineFailure::alignment_failure, "chunk-split",
                      std::to_string(words.size()) + " word timings for " + std::to_string(total) + " tokens");
  }
  std::vector<std::optional<Segment>> out(token_counts.size());
  std::size_t pos = 0;
  for (std::size_t i = 0; i < token_counts.size(); ++i) {
    const auto n = token_counts[i];
    if (n == 0) continue;
    out[i] = Segment::from_millis(words[pos].span.start_ms(), words[pos + n - 1].span.end_ms());
    pos += n;
  }
  return out;
}

namespace {

void run_single(const StopRecord& stop, const AudioRef& audio, ForcedAligner& aligner, AlignMethod method,
                const std::vector<std::optional<Segment>>& heuristic, CandidateProposal& out) {
  for (std::size_t i = 0; i < stop.utterances.size(); ++i) {
    if (!heuristic[i]) continue;
    const auto& u = stop.utterances[i];
    try {
      const auto words = aligner.force_align(audio, *heuristic[i], u.raw_text);
      if (words.empty()) throw EngineError(EngineFailure::alignment_failure, aligner.descriptor().name, "no words");
      out.candidates[i].emplace_back(
          method, Segment::from_millis(words.front().span.start_ms(), words.back().span.end_ms()));
    } catch (const Error& e) {
      out.failures.push_back({u.id, method, e.what()});
    }
  }
}

void run_chunked(const StopRecord& stop, const AudioRef& audio, ForcedAligner& aligner, AlignMethod method,
                 const std::vector<std::optional<Segment>>& heuristic, double chunk_max_s,
                 CandidateProposal& out) {
  std::vector<std::size_t> index;  // position in stop.utterances
  std::vector<Segment> segs;
  for (std::size_t i = 0; i < heuristic.size(); ++i) {
    if (heuristic[i]) {
      index.push_back(i);
      segs.push_back(*heuristic[i]);
    }
  }
  for (const auto& chunk : chunk_utterances(segs, chunk_max_s)) {
    std::vector<std::size_t> counts;
    std::string transcript;
    for (auto m : chunk.members) {
      const auto tokens = normalize(stop.utterances[index[m]].raw_text).tokens;
      counts.push_back(tokens.size());
      for (const auto& t : tokens) {
        if (!transcript.empty()) transcript.push_back(' ');
        transcript += t;
      }
    }
    if (transcript.empty()) continue;
    try {
      const auto words = aligner.force_align(audio, chunk.span, transcript);
      const auto parts = split_chunk_by_words(counts, words);
      for (std::size_t k = 0; k < chunk.members.size(); ++k) {
        if (parts[k]) out.candidates[index[chunk.members[k]]].emplace_back(method, *parts[k]);
      }
    } catch (const Error& e) {
      out.failures.push_back({std::string(), method, e.what()});
    }
  }
}

}  // namespace

CandidateProposal propose_candidates(const StopRecord& stop, const AudioRef& audio, ForcedAligner& mfa_role,
                                     ForcedAligner& w2v2_role, double chunk_max_s) {
  CandidateProposal out;
  out.candidates.resize(stop.utterances.size());
  const auto heuristic = heuristic_timestamps(stop.utterances, audio.duration_ms);
  for (std::size_t i = 0; i < stop.utterances.size(); ++i) {
    if (!stop.utterances[i].has_raw_marks()) {
      out.skipped.push_back(stop.utterances[i].id);
    } else if (heuristic[i]) {
      out.candidates[i].emplace_back(AlignMethod::unaligned, *heuristic[i]);
    }
  }
  run_single(stop, audio, mfa_role, AlignMethod::mfa, heuristic, out);
  run_chunked(stop, audio, mfa_role, AlignMethod::mfa_chunked, heuristic, chunk_max_s, out);
  run_single(stop, audio, w2v2_role, AlignMethod::w2v2, heuristic, out);
  run_chunked(stop, audio, w2v2_role, AlignMethod::w2v2_chunked, heuristic, chunk_max_s, out);
  for (auto& c : out.candidates) {
    std::stable_sort(c.begin(), c.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  }
  return out;
}

std::optional<AlignedUtterance> select_best(std::string_view utterance_id,
                                            std::span<const std::pair<AlignMethod, Segment>> candidates,
                                            std::span<Transcriber* const> transcribers,
                                            const AudioRef& audio, std::string_view ref_text) {
  if (candidates.empty() || transcribers.empty()) return std::nullopt;
  // Several methods often land on the same segment; transcribe it once.
  std::map<std::tuple<std::size_t, std::int64_t, std::int64_t>, std::optional<std::string>> cache;
  AlignedUtterance result;
  result.utterance_id = std::string(utterance_id);
  std::optional<std::size_t> best;
  for (const auto& [method, segment] : candidates) {
    AlignmentCandidate cand;
    cand.method = method;
    cand.segment = segment;
    cand.min_wer = std::numeric_limits<double>::infinity();
    cand.min_no_subs = std::numeric_limits<double>::infinity();
    for (std::size_t e = 0; e < transcribers.size(); ++e) {
      const auto key = std::make_tuple(e, segment.start_ms(), segment.end_ms());
      auto it = cache.find(key);
      if (it == cache.end()) {
        std::optional<std::string> text;
        try {
          text = transcribers[e]->transcribe(audio, segment);
        } catch (const Error&) {
        }
        it = cache.emplace(key, std::move(text)).first;
      }
      const auto& slot = it->second;
      if (!slot) continue;
      const auto& name = transcribers[e]->descriptor().name;
      const auto w = wer(ref_text, *slot);
      const auto ns = wer_no_subs(ref_text, *slot);
      cand.per_engine_wer[name] = w.value;
      cand.per_engine_no_subs[name] = ns.value;
      cand.per_engine_counts[name] = w.counts;
      cand.min_wer = std::min(cand.min_wer, w.value);
      cand.min_no_subs = std::min(cand.min_no_subs, ns.value);
    }
    if (cand.per_engine_wer.empty()) continue;
    result.all_candidates.push_back(std::move(cand));
    const auto& added = result.all_candidates.back();
    if (!best || added.min_wer < result.all_candidates[*best].min_wer) {
      best = result.all_candidates.size() - 1;
    }
  }
  if (!best) return std::nullopt;
  result.chosen = result.all_candidates[*best];
  return result;
}

StopAlignment align_stop(const StopRecord& stop, const AudioRef& audio, ForcedAligner& mfa_role,
                         ForcedAligner& w2v2_role, std::span<Transcriber* const> transcribers,
                         double chunk_max_s) {
  StopAlignment out;
  out.aligned = stop;
  auto proposal = propose_candidates(stop, audio, mfa_role, w2v2_role, chunk_max_s);
  out.failures = std::move(proposal.failures);
  out.skipped = std::move(proposal.skipped);
  for (std::size_t i = 0; i < stop.utterances.size(); ++i) {
    auto& u = out.aligned.utterances[i];
    if (!u.has_raw_marks()) continue;
    auto best = select_best(u.id, proposal.candidates[i], transcribers, audio, u.raw_text);
    if (!best) {
      u.segment.reset();
      out.unalignable.push_back(u.id);
      continue;
    }
    u.segment = best->chosen.segment;
    out.utterances.push_back(std::move(*best));
  }
  return out;
}

std::vector<MethodSummary> summarize_methods(std::span<const AlignedUtterance> utterances) {
  std::vector<MethodSummary> out(kAlignMethodCount);
  std::vector<std::map<std::string, EditCounts>> pooled(kAlignMethodCount);
  for (std::size_t m = 0; m < kAlignMethodCount; ++m) out[m].method = static_cast<AlignMethod>(m);
  for (const auto& u : utterances) {
    ++out[static_cast<std::size_t>(u.chosen.method)].chosen;
    for (const auto& c : u.all_candidates) {
      const auto m = static_cast<std::size_t>(c.method);
      ++out[m].candidates;
      for (const auto& [engine, counts] : c.per_engine_counts) pooled[m][engine] += counts;
    }
  }
  for (std::size_t m = 0; m < kAlignMethodCount; ++m) {
    for (const auto& [engine, counts] : pooled[m]) out[m].engine_wer[engine] = score_from_counts(counts).value;
    out[m].chosen_fraction =
        utterances.empty() ? 0.0 : double(out[m].chosen) / double(utterances.size());
  }
  return out;
}

}  // namespace bwc
