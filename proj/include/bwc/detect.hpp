#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bwc/corpus.hpp"
#include "bwc/engines.hpp"
#include "bwc/mel.hpp"
#include "bwc/metrics.hpp"
#include "bwc/wav.hpp"

namespace bwc {

inline constexpr std::int64_t kChunkMs = 250;
inline constexpr std::int64_t kChunkHopMs = 100;

struct DetectorThresholds {
  double t_vad = 0.5;
  double t_officer = 0.5;
  double t_smooth = 1.0;  // seconds

  /// Throws ValidationError outside t_vad, t_officer in [0,1] and
  /// t_smooth in [0.25, 2].
  void validate() const;
  friend bool operator==(const DetectorThresholds&, const DetectorThresholds&) = default;
};

/// 250 ms chunks at a 100 ms hop from `offset_ms`, while the chunk still
/// fits before `offset_ms + duration_ms`. Trailing partial chunks are dropped.
std::vector<Segment> chunk_stream(std::int64_t duration_ms, std::int64_t offset_ms = 0);
std::vector<Segment> chunk_span(const Segment& span);

struct ChunkScore {
  Segment segment = Segment::from_millis(0, kChunkMs);
  double vad = 0.0;
  double officer = 0.0;
};

/// Mel features of every chunk_stream chunk, sharing one whole-stream
/// feature pass. Chunk k is frames [10k, 10k + 23) of the stream.
std::vector<MelFeatures> stream_chunk_features(const Audio& audio, const MelExtractor& mel);

/// Scores every chunk of the stream with both scorers. Pass nullptr for
/// `officer` to skip it (officer scores are then 0).
std::vector<ChunkScore> score_stream(const Audio& audio, const MelExtractor& mel, FrameScorer& vad,
                                     FrameScorer* officer, const std::string& audio_path = {});

struct DetectedSegment {
  Segment segment = Segment::from_millis(0, 1);
  double vad = 0.0;      // mean over merged chunks
  double officer = 0.0;  // mean over merged chunks
};

/// Keeps chunks with vad > t_vad and officer > t_officer, then merges
/// kept chunks whose gap (next start - running end) is <= t_smooth.
std::vector<DetectedSegment> gate_and_merge(std::span<const ChunkScore> scores, const DetectorThresholds& th);

std::vector<DetectedSegment> detect_officer_segments(const Audio& audio, const MelExtractor& mel,
                                                     FrameScorer& vad, FrameScorer& officer,
                                                     const DetectorThresholds& th,
                                                     const std::string& audio_path = {});

/// Merge sorted segments whose end-to-start gap is <= max_gap_ms.
std::vector<Segment> merge_segments(std::span<const Segment> sorted, std::int64_t max_gap_ms);

struct NegativeConfig {
  double min_vad = 0.5;
  double merge_gap_s = 1.0;
};

/// Untranscribed speech: stream chunks with vad >= min_vad, merged within
/// merge_gap_s, minus anything overlapping a transcribed segment.
std::vector<Segment> augment_negatives(std::span<const ChunkScore> stream_scores, const StopRecord& stop,
                                       const NegativeConfig& config = {});
std::vector<Segment> augment_negatives(const StopRecord& stop, const Audio& audio, const MelExtractor& mel,
                                       FrameScorer& vad, const NegativeConfig& config = {});

enum class ChunkLabel { officer, not_officer, unlabeled };

struct LabeledChunk {
  std::size_t stop_index = 0;
  Segment segment = Segment::from_millis(0, kChunkMs);
  ChunkLabel label = ChunkLabel::unlabeled;
  float gain = 1.0f;
};

struct TrainingChunkConfig {
  std::size_t per_class = 150000;
  double utterance_min_vad = 0.3;
  NegativeConfig negatives;
  double augment_probability = 0.5;
  double augment_min_gain = 0.1;
  double augment_max_gain = 1.0;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
};

struct TrainingChunkStats {
  std::size_t utterances_dropped_vad = 0;
  std::size_t officer_available = 0;
  std::size_t not_officer_available = 0;
  std::size_t negative_segments = 0;
  std::size_t augmented = 0;
};

using AudioLoader = std::function<Audio(const StopRecord&)>;

/// Labeled, sampled, volume-augmented chunk list (officer chunks first).
/// Throws PreconditionError when either class is empty.
std::vector<LabeledChunk> build_training_chunks(const Manifest& manifest, const AudioLoader& load,
                                                const MelExtractor& mel, FrameScorer& vad,
                                                const TrainingChunkConfig& config,
                                                TrainingChunkStats* stats = nullptr);

/// The chunk's samples with its gain applied. Gain 1 copies untouched.
std::vector<float> chunk_samples(const Audio& audio, const LabeledChunk& chunk);

struct DetectionWer {
  WerScore score;
  double substitution_pct = 0.0;
  double deletion_pct = 0.0;
  double insertion_pct = 0.0;
  std::size_t failed_segments = 0;
};

/// Primary-officer utterances with segments, sorted by start, as
/// reference timed text.
std::vector<TimedText> officer_references(const StopRecord& stop);

/// Transcribes each detected segment and scores the concatenation against
/// the concatenated primary-officer references. A transcriber failure
/// contributes empty text and is counted.
DetectionWer evaluate_detection(std::span<const Segment> detected, const StopRecord& stop,
                                const AudioRef& audio, Transcriber& transcriber);
DetectionWer detection_wer_from_counts(const EditCounts& counts, std::size_t failed = 0);

struct SegmentF1 {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t correct = 0;
  std::size_t detected = 0;
  std::size_t recalled = 0;
  std::size_t truth = 0;
};

/// A truth segment is recalled when one detected segment covers at least
/// half of it. A detected segment is correct when at least half of it lies
/// inside the union of the truth segments.
SegmentF1 segment_f1(std::span<const Segment> detected, std::span<const Segment> truth);
SegmentF1 pool_f1(std::span<const SegmentF1> parts);

}  // namespace bwc
