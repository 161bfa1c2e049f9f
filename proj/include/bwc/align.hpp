#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bwc/corpus.hpp"
#include "bwc/engines.hpp"
#include "bwc/metrics.hpp"

namespace bwc {

/// Alignment methods in canonical (tie-breaking) order.
enum class AlignMethod { unaligned, mfa, mfa_chunked, w2v2, w2v2_chunked };
inline constexpr std::size_t kAlignMethodCount = 5;

std::string_view to_string(AlignMethod m);
AlignMethod parse_align_method(std::string_view s);

struct AlignmentCandidate {
  AlignMethod method = AlignMethod::unaligned;
  Segment segment = Segment::from_millis(0, 1);
  std::map<std::string, double> per_engine_wer;
  std::map<std::string, double> per_engine_no_subs;
  std::map<std::string, EditCounts> per_engine_counts;
  double min_wer = 0.0;
  double min_no_subs = 0.0;
};

struct AlignedUtterance {
  std::string utterance_id;
  AlignmentCandidate chosen;
  std::vector<AlignmentCandidate> all_candidates;
};

/// Transcriber second marks widened by 0.25 s each side and clamped to the
/// audio. Repairs, in order: a start earlier than the previous start is
/// raised to it; a missing end becomes the next utterance's start (or
/// start + 1 for the last); an end before the start becomes start + 1.
/// Entries without raw marks, or falling wholly past the audio, are empty.
std::vector<std::optional<Segment>> heuristic_timestamps(std::span<const Utterance> utterances,
                                                         std::int64_t audio_duration_ms);

struct UtteranceChunk {
  std::vector<std::size_t> members;  // indices into the input
  Segment span = Segment::from_millis(0, 1);
};

/// Greedy left-to-right grouping: a chunk grows while the summed member
/// durations stay <= max_len_s. A lone member longer than max_len_s forms
/// its own chunk.
std::vector<UtteranceChunk> chunk_utterances(std::span<const Segment> segments, double max_len_s = 20.0);

/// Splits chunk-level word timings back into per-member segments. Members
/// with zero tokens get no segment. Throws EngineError(alignment_failure)
/// when the timing count differs from the token total.
std::vector<std::optional<Segment>> split_chunk_by_words(std::span<const std::size_t> token_counts,
                                                         std::span<const WordTiming> words);

struct MethodFailure {
  std::string utterance_id;  // empty when a whole chunk failed
  AlignMethod method = AlignMethod::unaligned;
  std::string message;
};

struct CandidateProposal {
  /// Parallel to stop.utterances; candidates in canonical method order.
  std::vector<std::vector<std::pair<AlignMethod, Segment>>> candidates;
  std::vector<MethodFailure> failures;
  std::vector<std::string> skipped;  // utterances lacking raw marks
};

/// Runs the five methods. `mfa_role` and `w2v2_role` are any two forced
/// aligners. A failing method contributes no candidate.
CandidateProposal propose_candidates(const StopRecord& stop, const AudioRef& audio,
                                     ForcedAligner& mfa_role, ForcedAligner& w2v2_role,
                                     double chunk_max_s = 20.0);

/// Scores each candidate with every transcriber and keeps the lowest
/// min-over-engines WER, ties to the earliest method. Returns nullopt when
/// every transcription failed.
std::optional<AlignedUtterance> select_best(std::string_view utterance_id,
                                            std::span<const std::pair<AlignMethod, Segment>> candidates,
                                            std::span<Transcriber* const> transcribers,
                                            const AudioRef& audio, std::string_view ref_text);

struct StopAlignment {
  StopRecord aligned;  // chosen segments written into utterances
  std::vector<AlignedUtterance> utterances;
  std::vector<std::string> unalignable;
  std::vector<MethodFailure> failures;
  std::vector<std::string> skipped;
};

StopAlignment align_stop(const StopRecord& stop, const AudioRef& audio, ForcedAligner& mfa_role,
                         ForcedAligner& w2v2_role, std::span<Transcriber* const> transcribers,
                         double chunk_max_s = 20.0);

/// Per-method summary in the layout of an alignment comparison table: the
/// pooled WER each engine gets over every utterance under that method, and
/// the share of utterances whose final alignment came from it.
struct MethodSummary {
  AlignMethod method = AlignMethod::unaligned;
  std::map<std::string, double> engine_wer;
  std::size_t candidates = 0;
  std::size_t chosen = 0;
  double chosen_fraction = 0.0;
};

std::vector<MethodSummary> summarize_methods(std::span<const AlignedUtterance> utterances);

}  // namespace bwc
