#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "bwc/corpus.hpp"
#include "bwc/errors.hpp"
#include "bwc/mel.hpp"

namespace bwc {

enum class EngineKind { transcriber, forced_aligner, frame_scorer };
enum class Transport { in_process_mock, subprocess };

std::string_view to_string(EngineKind k);
std::string_view to_string(Transport t);
EngineKind parse_engine_kind(std::string_view s);
Transport parse_transport(std::string_view s);

struct EngineDescriptor {
  std::string name;
  EngineKind kind = EngineKind::transcriber;
  Transport transport = Transport::in_process_mock;
};

enum class EngineFailure {
  unavailable,
  out_of_bounds,
  alignment_failure,
  precondition,
  shape_mismatch,
  timeout,
  protocol,
};

std::string_view to_string(EngineFailure f);

class EngineError : public Error {
 public:
  EngineError(EngineFailure failure, const std::string& engine, const std::string& message)
      : Error("engine", engine + ": " + std::string(to_string(failure)) + ": " + message),
        failure_(failure) {}
  EngineFailure failure() const noexcept { return failure_; }

 private:
  EngineFailure failure_;
};

/// Audio handed to engines by path plus its length, never by samples.
struct AudioRef {
  std::string path;
  std::int64_t duration_ms = 0;
};

struct WordTiming {
  std::string word;
  Segment span;
};

class Transcriber {
 public:
  virtual ~Transcriber() = default;
  virtual const EngineDescriptor& descriptor() const = 0;
  /// Hypothesis text for `segment`, possibly empty.
  virtual std::string transcribe(const AudioRef& audio, const Segment& segment) = 0;
};

class ForcedAligner {
 public:
  virtual ~ForcedAligner() = default;
  virtual const EngineDescriptor& descriptor() const = 0;
  /// One timing per normalized transcript token, sorted, non-overlapping
  /// and inside `segment`.
  virtual std::vector<WordTiming> force_align(const AudioRef& audio, const Segment& segment,
                                              std::string_view transcript) = 0;
};

/// Where a feature matrix came from; forwarded to out-of-process scorers.
struct ChunkContext {
  std::string audio_path;
  std::optional<Segment> segment;
};

class FrameScorer {
 public:
  virtual ~FrameScorer() = default;
  virtual const EngineDescriptor& descriptor() const = 0;
  virtual std::size_t input_bins() const { return MelConfig::kBins; }
  /// Score in [0, 1]. Throws EngineError(shape_mismatch) when the feature
  /// bin count differs from input_bins().
  virtual double score_frames(const MelFeatures& features, const ChunkContext& context = {}) = 0;
};

void check_bounds(const EngineDescriptor& engine, const AudioRef& audio, const Segment& segment);
void check_shape(const EngineDescriptor& engine, const MelFeatures& features, std::size_t bins);

/// Even split of a segment across the normalized transcript tokens.
std::vector<WordTiming> uniform_word_timings(const Segment& segment, std::size_t count);

// ---------------------------------------------------------------------------
// Word-level ground truth for synthetic audio. Mock engines that stand in
// for perfect models read it.

struct TruthWord {
  std::string word;
  Segment span;
  SpeakerRole role = SpeakerRole::unknown;
  std::string utterance_id;  // empty for untranscribed speech
};

class WordTruth {
 public:
  void add(const std::string& audio_path, std::vector<TruthWord> words);
  /// Words for one audio file sorted by start; empty when unknown.
  const std::vector<TruthWord>& words(const std::string& audio_path) const;
  const std::map<std::string, std::vector<TruthWord>>& all() const noexcept { return by_audio_; }

  static WordTruth load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

 private:
  std::map<std::string, std::vector<TruthWord>> by_audio_;
};

// ---------------------------------------------------------------------------
// In-process mock engines.

/// Exact-key lookup on (audio path, segment). Unknown keys return "".
class TableTranscriber final : public Transcriber {
 public:
  explicit TableTranscriber(std::string name);
  void set(const std::string& audio_path, const Segment& segment, std::string text);
  const EngineDescriptor& descriptor() const override { return desc_; }
  std::string transcribe(const AudioRef& audio, const Segment& segment) override;

 private:
  EngineDescriptor desc_;
  std::map<std::tuple<std::string, std::int64_t, std::int64_t>, std::string> table_;
};

/// Emits every ground-truth word with at least half its duration inside
/// the query segment, in time order.
class EchoTranscriber final : public Transcriber {
 public:
  EchoTranscriber(std::string name, std::shared_ptr<const WordTruth> truth);
  const EngineDescriptor& descriptor() const override { return desc_; }
  std::string transcribe(const AudioRef& audio, const Segment& segment) override;

 private:
  EngineDescriptor desc_;
  std::shared_ptr<const WordTruth> truth_;
};

/// Drops each word of an inner transcriber's output with probability
/// `dropout`. The decision per word is a pure function of
/// (seed, audio file name, segment, word index).
class DegradedTranscriber final : public Transcriber {
 public:
  DegradedTranscriber(std::string name, std::shared_ptr<Transcriber> inner, double dropout,
                      std::uint64_t seed);
  const EngineDescriptor& descriptor() const override { return desc_; }
  std::string transcribe(const AudioRef& audio, const Segment& segment) override;

 private:
  EngineDescriptor desc_;
  std::shared_ptr<Transcriber> inner_;
  double dropout_;
  std::uint64_t seed_;
};

class UniformAligner final : public ForcedAligner {
 public:
  explicit UniformAligner(std::string name);
  const EngineDescriptor& descriptor() const override { return desc_; }
  std::vector<WordTiming> force_align(const AudioRef& audio, const Segment& segment,
                                      std::string_view transcript) override;

 private:
  EngineDescriptor desc_;
};

/// Ground-truth aligner with seeded boundary jitter: finds the tightest run
/// of truth words inside the segment that contains the transcript tokens
/// in order, then perturbs each boundary by up to `jitter_s`.
class JitterAligner final : public ForcedAligner {
 public:
  JitterAligner(std::string name, std::shared_ptr<const WordTruth> truth, double jitter_s,
                std::uint64_t seed);
  const EngineDescriptor& descriptor() const override { return desc_; }
  std::vector<WordTiming> force_align(const AudioRef& audio, const Segment& segment,
                                      std::string_view transcript) override;

 private:
  EngineDescriptor desc_;
  std::shared_ptr<const WordTruth> truth_;
  double jitter_s_;
  std::uint64_t seed_;
};

/// Always reports alignment failure.
class FailingAligner final : public ForcedAligner {
 public:
  explicit FailingAligner(std::string name);
  const EngineDescriptor& descriptor() const override { return desc_; }
  std::vector<WordTiming> force_align(const AudioRef&, const Segment&, std::string_view) override;

 private:
  EngineDescriptor desc_;
};

/// Mean per-frame log energy (log of summed mel energies) through a
/// logistic. Digital silence scores exactly 0.
class EnergyVad final : public FrameScorer {
 public:
  /// Defaults put the logistic midpoint at white noise of RMS 0.008.
  static constexpr double kDefaultMidpointRms = 0.008;
  static constexpr double kDefaultSlope = 0.5;

  explicit EnergyVad(std::string name, double midpoint_rms = kDefaultMidpointRms,
                     double slope = kDefaultSlope);
  const EngineDescriptor& descriptor() const override { return desc_; }
  double score_frames(const MelFeatures& features, const ChunkContext& context = {}) override;

  /// Mean over frames of log(sum over bands of exp(log-mel)).
  static double mean_log_energy(const MelFeatures& features);
  /// Expected mean log energy of white noise with the given RMS.
  static double log_energy_for_rms(double rms);

 private:
  EngineDescriptor desc_;
  double midpoint_;
  double slope_;
};

// ---------------------------------------------------------------------------

/// Named engines built from configuration. Lookups of missing names throw
/// ValidationError naming the engine.
class EngineRegistry {
 public:
  void add(std::shared_ptr<Transcriber> e);
  void add(std::shared_ptr<ForcedAligner> e);
  void add(std::shared_ptr<FrameScorer> e);

  std::shared_ptr<Transcriber> transcriber(const std::string& name) const;
  std::shared_ptr<ForcedAligner> aligner(const std::string& name) const;
  std::shared_ptr<FrameScorer> scorer(const std::string& name) const;
  bool contains(const std::string& name) const;
  std::vector<EngineDescriptor> descriptors() const;

 private:
  void claim(const EngineDescriptor& d);
  std::map<std::string, EngineDescriptor> names_;
  std::map<std::string, std::shared_ptr<Transcriber>> transcribers_;
  std::map<std::string, std::shared_ptr<ForcedAligner>> aligners_;
  std::map<std::string, std::shared_ptr<FrameScorer>> scorers_;
};

}  // namespace bwc
