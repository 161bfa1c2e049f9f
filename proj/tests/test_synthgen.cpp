#include <doctest.h>

#include <cmath>
#include <fstream>

#include "bwc/errors.hpp"
#include "bwc/metrics.hpp"
#include "bwc/synthgen.hpp"
#include "test_helpers.hpp"

using namespace bwc;

namespace {

SceneSpec scene() {
  SceneSpec s;
  s.stop_id = "t";
  s.duration_s = 30;
  s.seed = 5;
  s.speakers = {{SpeakerRole::primary_officer, 1.0, 4, {}, true},
                {SpeakerRole::community_member, 0.2, 4, {}, true},
                {SpeakerRole::dispatch, 0.3, 2, {}, false}};
  return s;
}

double rms(std::span<const float> x) {
  double s = 0;
  for (float v : x) s += double(v) * v;
  return std::sqrt(s / double(std::max<std::size_t>(x.size(), 1)));
}

}  // namespace

TEST_CASE("word rendering") {
  CHECK(word_duration_ms("no") == 250);
  CHECK(word_duration_ms("a") == 205);
  CHECK(word_duration_ms("registrationregistration") == 600);
  const auto w = render_word("okay", 300, 1.0);
  REQUIRE(w.size() == 4800);
  CHECK(std::abs(w.front()) < 1e-3f);
  CHECK(std::abs(w.back()) < 1e-2f);
  CHECK(rms(w) > 0.03);
  const auto quiet = render_word("okay", 300, 0.1);
  CHECK(rms(quiet) == doctest::Approx(0.1 * rms(w)).epsilon(1e-3));
  CHECK(render_word("okay", 300, 1.0) == w);
  CHECK(render_word("other", 300, 1.0) != w);
}

TEST_CASE("generated stop matches its truth") {
  const auto g = generate_stop(scene());
  CHECK(g.audio.duration_ms() == 30000);
  CHECK(g.record.utterances.size() == 8);
  std::size_t untranscribed = 0;
  for (const auto& w : g.truth) untranscribed += w.utterance_id.empty();
  CHECK(untranscribed >= 4);
  for (const auto& u : g.record.utterances) {
    REQUIRE(u.segment);
    CHECK(*u.raw_start_s == u.segment->start_ms() / 1000);
    CHECK(*u.raw_end_s * 1000 >= u.segment->end_ms());
    std::string words;
    for (const auto& w : g.truth) {
      if (w.utterance_id == u.id) words += (words.empty() ? "" : " ") + w.word;
    }
    CHECK(words == u.raw_text);
    const auto [lo, hi] = sample_range(*u.segment);
    const double level = rms(std::span<const float>(g.audio.samples).subspan(lo, hi - lo));
    if (u.speaker_role == SpeakerRole::primary_officer) CHECK(level > 0.03);
  }
  // no overlap at probability 0
  for (std::size_t i = 1; i < g.record.utterances.size(); ++i) {
    CHECK(g.record.utterances[i].segment->start_ms() >= g.record.utterances[i - 1].segment->end_ms());
  }
  const auto again = generate_stop(scene());
  CHECK(again.audio.samples == g.audio.samples);
  CHECK(again.record == g.record);
}

TEST_CASE("echo transcription of generated speech is exact") {
  const auto g = generate_stop(scene());
  auto truth = std::make_shared<WordTruth>();
  truth->add(g.record.audio_path, g.truth);
  EchoTranscriber echo("echo", truth);
  const AudioRef ref{g.record.audio_path, g.audio.duration_ms()};
  for (const auto& u : g.record.utterances) CHECK(wer(u.raw_text, echo.transcribe(ref, *u.segment)).value == 0.0);
}

TEST_CASE("scene validation and infeasibility") {
  auto s = scene();
  s.overlap_probability = 1.5;
  CHECK_THROWS_AS(s.validate(), ValidationError);
  s = scene();
  s.speakers[1].gain = 0.0;
  CHECK_THROWS_AS(s.validate(), ValidationError);
  s = scene();
  s.duration_s = 5;
  CHECK_THROWS_AS(generate_stop(s), InfeasibleError);
}

TEST_CASE("corpus layout and demographics") {
  CorpusSpec spec;
  spec.stops = 4;
  spec.duration_s = 40;
  spec.officer_utterances = 3;
  spec.community_utterances = 3;
  spec.seed = 2;
  const auto dir = testing::temp_dir("synth");
  const auto c = generate_corpus(spec, dir, 2);
  CHECK(std::filesystem::exists(dir / "manifest.jsonl"));
  CHECK(std::filesystem::exists(dir / "truth.jsonl"));
  REQUIRE(c.manifest.stops.size() == 4);
  CHECK(c.manifest.stops[0].audio_path == "audio/stop-000.wav");
  CHECK(c.manifest.stops[0].driver_race == Race::black);
  CHECK(c.manifest.stops[1].driver_race == Race::white);
  CHECK(c.manifest.stops[2].driver_gender == Gender::female);
  CHECK(c.manifest.stops[0].primary_officer_ids == std::vector<std::string>{"officer-000"});
  CHECK(c.manifest.stops[2].primary_officer_ids == std::vector<std::string>{"officer-000"});
  CHECK(load_manifest(dir / "manifest.jsonl") == c.manifest);
  const auto wav = read_wav(dir / "audio/stop-003.wav");
  CHECK(wav.duration_ms() == 40000);
  const auto dir2 = testing::temp_dir("synth2");
  generate_corpus(spec, dir2, 1);
  std::ifstream a(dir / "audio/stop-001.wav", std::ios::binary), b(dir2 / "audio/stop-001.wav", std::ios::binary);
  CHECK(std::string(std::istreambuf_iterator<char>(a), {}) == std::string(std::istreambuf_iterator<char>(b), {}));
  std::filesystem::remove_all(dir);
  std::filesystem::remove_all(dir2);
}
