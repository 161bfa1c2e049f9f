#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "bwc/corpus.hpp"
#include "bwc/engines.hpp"
#include "bwc/wav.hpp"

namespace bwc {

struct SpeakerSpec {
  SpeakerRole role = SpeakerRole::community_member;
  double gain = 1.0;  // forced to 1.0 for the primary officer
  std::size_t utterances = 3;
  std::vector<std::string> vocabulary;  // empty: built-in word list
  /// Untranscribed speakers (radio dispatch, bystanders) are rendered and
  /// recorded in the word truth, but get no manifest utterance.
  bool transcribed = true;
};

struct SceneSpec {
  std::string stop_id = "stop";
  std::string audio_path = "stop.wav";
  double duration_s = 60.0;
  std::vector<SpeakerSpec> speakers;
  double noise_floor = 0.0;  // white-noise standard deviation
  double overlap_probability = 0.0;
  double min_gap_s = 0.3;  // silence between consecutive utterances
  double max_gap_s = 1.0;
  std::size_t min_words = 2;
  std::size_t max_words = 8;
  std::uint64_t seed = 0;

  std::vector<std::string> primary_officer_ids{"officer-0"};
  std::vector<std::string> all_officer_ids{"officer-0"};
  Race driver_race = Race::white;
  Gender driver_gender = Gender::male;
  Race officer_race = Race::white;
  Gender officer_gender = Gender::male;

  /// Throws ValidationError on non-positive gains, probabilities outside
  /// [0, 1], or bad word/gap ranges.
  void validate() const;
};

struct GeneratedStop {
  Audio audio;
  StopRecord record;              // exact segments plus floor/ceil raw marks
  std::vector<TruthWord> truth;   // every rendered word, transcribed or not
};

const std::vector<std::string>& default_vocabulary();

/// Renders a tone-complex signature for one word: pitch, harmonic phases
/// and amplitude modulation are functions of the word alone.
std::vector<float> render_word(const std::string& word, std::int64_t duration_ms, double gain);
std::int64_t word_duration_ms(const std::string& word);

/// Throws InfeasibleError when the utterances do not fit in the duration.
GeneratedStop generate_stop(const SceneSpec& spec);

struct CorpusSpec {
  std::size_t stops = 10;
  double duration_s = 60.0;
  std::size_t officer_pool = 0;  // 0: ceil(stops / 2)
  std::size_t officer_utterances = 6;
  std::size_t community_utterances = 6;
  double community_gain = 0.2;
  std::size_t secondary_utterances = 0;
  double secondary_gain = 0.4;
  std::size_t dispatch_utterances = 0;  // untranscribed
  double dispatch_gain = 0.3;
  double noise_floor = 0.0;
  double overlap_probability = 0.0;
  double min_gap_s = 0.3;
  double max_gap_s = 1.0;
  std::size_t min_words = 2;
  std::size_t max_words = 8;
  std::uint64_t seed = 0;
};

struct GeneratedCorpus {
  Manifest manifest;
  WordTruth truth;
};

/// Scene for stop `index`: demographics cycle so every driver race/gender
/// cell is populated, primary officers come from a shared pool.
SceneSpec corpus_scene(const CorpusSpec& spec, std::size_t index);

/// Writes audio/<stop>.wav, manifest.jsonl and truth.jsonl under out_dir.
/// Manifest audio paths are relative to out_dir.
GeneratedCorpus generate_corpus(const CorpusSpec& spec, const std::filesystem::path& out_dir, std::size_t jobs = 1);

}  // namespace bwc
