#include <doctest.h>

#include "bwc/align.hpp"

using namespace bwc;

namespace {

Utterance utt(std::string id, std::string text, std::optional<std::int64_t> rs, std::optional<std::int64_t> re) {
  Utterance u;
  u.id = std::move(id);
  u.speaker_role = SpeakerRole::primary_officer;
  u.raw_text = std::move(text);
  u.raw_start_s = rs;
  u.raw_end_s = re;
  return u;
}

// Two utterances spoken at known times inside a 20 s stop.
struct Fixture {
  std::shared_ptr<WordTruth> truth = std::make_shared<WordTruth>();
  StopRecord stop;
  AudioRef audio{"s.wav", 20000};

  Fixture() {
    truth->add("s.wav", {{"step", Segment::from_millis(2100, 2400), SpeakerRole::primary_officer, "u1"},
                         {"out", Segment::from_millis(2500, 2800), SpeakerRole::primary_officer, "u1"},
                         {"why", Segment::from_millis(5200, 5500), SpeakerRole::community_member, "u2"},
                         {"sir", Segment::from_millis(5600, 5900), SpeakerRole::community_member, "u2"}});
    stop.stop_id = "s";
    stop.audio_path = "s.wav";
    stop.utterances = {utt("u1", "Step out.", 2, 3), utt("u2", "Why, sir?", 5, 6), utt("u3", "[radio]", {}, {})};
  }
};

}  // namespace

TEST_CASE("method names") {
  CHECK(to_string(AlignMethod::mfa_chunked) == "mfa_chunked");
  CHECK(parse_align_method("w2v2") == AlignMethod::w2v2);
  CHECK_THROWS_AS(parse_align_method("dtw"), ValidationError);
}

TEST_CASE("heuristic timestamps pad and clamp") {
  std::vector<Utterance> u{utt("a", "x", 0, 2), utt("b", "y", 5, {}), utt("c", "z", 4, {}), utt("d", "w", 9, {}),
                           utt("e", "q", {}, {})};
  const auto h = heuristic_timestamps(u, 9500);
  REQUIRE(h[0]);
  CHECK(*h[0] == Segment::from_millis(0, 2250));
  // b has no end: runs to the next start (4), which is before 5, so 1 s.
  CHECK(*h[1] == Segment::from_millis(4750, 6250));
  // c starts before b; clamped forward to 5.
  CHECK(h[2]->start_ms() == 4750);
  CHECK(h[3]->end_ms() == 9500);
  CHECK_FALSE(h[4]);
}

TEST_CASE("chunking respects the length cap") {
  std::vector<Segment> s;
  for (int i = 0; i < 10; ++i) s.push_back(Segment::from_millis(i * 3000, i * 3000 + 2500));
  const auto chunks = chunk_utterances(s, 6.0);
  REQUIRE(chunks.size() == 5);
  CHECK(chunks[0].members == std::vector<std::size_t>{0, 1});
  CHECK(chunks[0].span == Segment::from_millis(0, 5500));
  const auto single = chunk_utterances(std::vector<Segment>{Segment::from_millis(0, 30000)}, 6.0);
  CHECK(single.size() == 1);
}

TEST_CASE("splitting a chunk by word counts") {
  std::vector<WordTiming> w;
  for (int i = 0; i < 5; ++i) w.push_back({"w", Segment::from_millis(i * 100, i * 100 + 80)});
  const std::vector<std::size_t> counts{2, 0, 3};
  const auto parts = split_chunk_by_words(counts, w);
  CHECK(*parts[0] == Segment::from_millis(0, 180));
  CHECK_FALSE(parts[1]);
  CHECK(*parts[2] == Segment::from_millis(200, 480));
  const std::vector<std::size_t> wrong{2, 2};
  CHECK_THROWS_AS(split_chunk_by_words(wrong, w), EngineError);
}

TEST_CASE("align_stop picks the candidate with the lowest WER") {
  Fixture f;
  JitterAligner exact("mfa", f.truth, 0.0, 1);
  UniformAligner uni("w2v2");
  EchoTranscriber echo("echo", f.truth);
  Transcriber* ts[] = {&echo};
  const auto r = align_stop(f.stop, f.audio, exact, uni, ts);
  CHECK(r.skipped == std::vector<std::string>{"u3"});
  REQUIRE(r.utterances.size() == 2);
  for (const auto& u : r.utterances) {
    CHECK(u.chosen.min_wer == 0.0);
    CHECK(u.all_candidates.size() == kAlignMethodCount);
  }
  CHECK(r.aligned.utterances[0].segment.has_value());
  CHECK(r.aligned.utterances[0].segment->midpoint() == doctest::Approx(2.45).epsilon(0.05));
  CHECK_FALSE(r.aligned.utterances[2].segment.has_value());
  // Ties go to the earliest method in enum order.
  CHECK(r.utterances[0].chosen.method == AlignMethod::unaligned);
}

TEST_CASE("failing aligners leave the heuristic candidate") {
  Fixture f;
  FailingAligner a("mfa"), b("w2v2");
  EchoTranscriber echo("echo", f.truth);
  Transcriber* ts[] = {&echo};
  const auto r = align_stop(f.stop, f.audio, a, b, ts);
  REQUIRE(r.utterances.size() == 2);
  CHECK(r.utterances[0].all_candidates.size() == 1);
  CHECK(r.utterances[0].chosen.method == AlignMethod::unaligned);
  CHECK(r.failures.size() == 6);  // 2 single per aligner + 1 chunk per aligner
}

TEST_CASE("per-engine scores and min over engines") {
  Fixture f;
  auto table = std::make_shared<TableTranscriber>("table");
  EchoTranscriber echo("echo", f.truth);
  const std::vector<std::pair<AlignMethod, Segment>> cands{{AlignMethod::unaligned, Segment::from_millis(1750, 3250)},
                                                           {AlignMethod::mfa, Segment::from_millis(2100, 2800)}};
  table->set("s.wav", Segment::from_millis(2100, 2800), "step");
  Transcriber* ts[] = {table.get(), &echo};
  const auto best = select_best("u1", cands, ts, f.audio, "step out");
  REQUIRE(best);
  REQUIRE(best->all_candidates.size() == 2);
  CHECK(best->all_candidates[1].per_engine_wer.at("table") == doctest::Approx(0.5));
  CHECK(best->all_candidates[1].per_engine_wer.at("echo") == 0.0);
  CHECK(best->all_candidates[1].min_wer == 0.0);
  CHECK(best->all_candidates[0].per_engine_wer.at("table") == 1.0);
  CHECK(best->chosen.method == AlignMethod::unaligned);
  CHECK_FALSE(select_best("u1", {}, ts, f.audio, "x"));
}

TEST_CASE("method summary pools counts") {
  Fixture f;
  JitterAligner exact("mfa", f.truth, 0.0, 1);
  UniformAligner uni("w2v2");
  EchoTranscriber echo("echo", f.truth);
  Transcriber* ts[] = {&echo};
  const auto r = align_stop(f.stop, f.audio, exact, uni, ts);
  const auto s = summarize_methods(r.utterances);
  REQUIRE(s.size() == kAlignMethodCount);
  double frac = 0.0;
  for (const auto& m : s) {
    CHECK(m.candidates == 2);
    frac += m.chosen_fraction;
  }
  CHECK(frac == doctest::Approx(1.0));
  CHECK(s[static_cast<std::size_t>(AlignMethod::mfa)].engine_wer.at("echo") == 0.0);
}
