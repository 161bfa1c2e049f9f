#include <doctest.h>

#include <cmath>

#include "bwc/detect.hpp"
#include "bwc/errors.hpp"
#include "bwc/rng.hpp"

using namespace bwc;

namespace {

ChunkScore cs(std::int64_t start_ms, double vad, double officer) {
  return {Segment::from_millis(start_ms, start_ms + kChunkMs), vad, officer};
}

// Quiet noise with loud tone bursts at the given spans.
Audio bursts(std::int64_t duration_ms, const std::vector<Segment>& loud, std::uint64_t seed = 1) {
  Rng rng(seed);
  Audio a;
  a.samples.resize(static_cast<std::size_t>(duration_ms * kSampleRate / 1000));
  for (auto& v : a.samples) v = static_cast<float>(0.001 * rng.normal());
  for (const auto& s : loud) {
    const auto [lo, hi] = sample_range(s);
    for (std::size_t i = lo; i < hi; ++i) a.samples[i] += static_cast<float>(0.3 * std::sin(0.2 * double(i)));
  }
  return a;
}

Utterance utt(std::string id, SpeakerRole role, Segment seg, std::string text = "words here") {
  Utterance u;
  u.id = std::move(id);
  u.speaker_role = role;
  u.raw_text = std::move(text);
  u.segment = seg;
  return u;
}

// Officer score is a fixed lookup on chunk start time.
class ScriptedScorer final : public FrameScorer {
 public:
  explicit ScriptedScorer(std::function<double(const Segment&)> fn) : fn_(std::move(fn)) {}
  const EngineDescriptor& descriptor() const override { return desc_; }
  double score_frames(const MelFeatures&, const ChunkContext& ctx) override { return fn_(*ctx.segment); }

 private:
  EngineDescriptor desc_{"scripted", EngineKind::frame_scorer, Transport::in_process_mock};
  std::function<double(const Segment&)> fn_;
};

}  // namespace

TEST_CASE("threshold validation") {
  DetectorThresholds{}.validate();
  CHECK_THROWS_AS((DetectorThresholds{1.1, 0.5, 1.0}.validate()), ValidationError);
  CHECK_THROWS_AS((DetectorThresholds{0.5, -0.1, 1.0}.validate()), ValidationError);
  CHECK_THROWS_AS((DetectorThresholds{0.5, 0.5, 0.2}.validate()), ValidationError);
  CHECK_THROWS_AS((DetectorThresholds{0.5, 0.5, 2.5}.validate()), ValidationError);
}

TEST_CASE("chunk grid") {
  const auto c = chunk_stream(1000);
  REQUIRE(c.size() == 8);
  CHECK(c.front() == Segment::from_millis(0, 250));
  CHECK(c.back() == Segment::from_millis(700, 950));
  CHECK(chunk_stream(249).empty());
  const auto span = chunk_span(Segment::from_millis(2000, 2350));
  REQUIRE(span.size() == 2);
  CHECK(span[1] == Segment::from_millis(2100, 2350));
}

TEST_CASE("cached stream features equal per-chunk extraction") {
  MelExtractor mel;
  const auto audio = bursts(3000, {Segment::from_millis(500, 1500)});
  const auto feats = stream_chunk_features(audio, mel);
  const auto chunks = chunk_stream(audio.duration_ms());
  REQUIRE(feats.size() == chunks.size());
  for (std::size_t k = 0; k < chunks.size(); ++k) {
    const auto direct = mel.frame_mel(audio, chunks[k]);
    REQUIRE(direct.frames == 23);
    CHECK(feats[k].values == direct.values);
  }
}

TEST_CASE("gate_and_merge uses strict gates and merges within t_smooth") {
  const std::vector<ChunkScore> s{cs(0, 0.9, 0.9), cs(100, 0.5, 0.9), cs(200, 0.9, 0.5), cs(1500, 0.9, 0.9),
                                  cs(3000, 0.9, 0.9)};
  DetectorThresholds th{0.5, 0.5, 1.25};
  const auto d = gate_and_merge(s, th);
  // 0-250 and 1500-1750: gap 1250 <= 1250 merges; 3000 is 1250 after 1750 merges too.
  REQUIRE(d.size() == 1);
  CHECK(d[0].segment == Segment::from_millis(0, 3250));
  CHECK(d[0].vad == doctest::Approx(0.9));
  th.t_smooth = 1.0;
  const auto e = gate_and_merge(s, th);
  REQUIRE(e.size() == 3);
  CHECK(e[0].segment == Segment::from_millis(0, 250));
  CHECK(gate_and_merge({}, th).empty());
}

TEST_CASE("gate_and_merge laws") {
  Rng rng(12);
  for (int it = 0; it < 300; ++it) {
    std::vector<ChunkScore> s;
    for (int k = 0; k < 100; ++k) s.push_back(cs(k * kChunkHopMs, rng.uniform(), rng.uniform()));
    const double tv = rng.uniform(), to = rng.uniform(), ts = rng.uniform(0.25, 2.0);
    const auto d = gate_and_merge(s, {tv, to, ts});
    for (std::size_t i = 1; i < d.size(); ++i) {
      CHECK(d[i].segment.start_ms() - d[i - 1].segment.end_ms() > std::llround(ts * 1000));
    }
    // Raising a threshold never adds coverage.
    const auto covered = [](const std::vector<DetectedSegment>& v) {
      std::int64_t t = 0;
      for (const auto& x : v) t += x.segment.duration_ms();
      return t;
    };
    CHECK(covered(gate_and_merge(s, {std::min(1.0, tv + 0.1), to, ts})) <= covered(d));
    // Larger smoothing never produces more segments.
    CHECK(gate_and_merge(s, {tv, to, std::min(2.0, ts + 0.5)}).size() <= d.size());
  }
}

TEST_CASE("merge_segments") {
  const std::vector<Segment> s{Segment::from_millis(0, 100), Segment::from_millis(150, 200),
                               Segment::from_millis(180, 300), Segment::from_millis(1000, 1100)};
  const auto m = merge_segments(s, 50);
  REQUIRE(m.size() == 2);
  CHECK(m[0] == Segment::from_millis(0, 300));
  CHECK(merge_segments(s, 0).size() == 3);
}

TEST_CASE("negatives exclude transcribed speech") {
  MelExtractor mel;
  EnergyVad vad("vad");
  const auto audio = bursts(10000, {Segment::from_millis(1000, 2000), Segment::from_millis(5000, 6000)});
  StopRecord stop;
  stop.stop_id = "s";
  stop.utterances = {utt("u1", SpeakerRole::primary_officer, Segment::from_millis(900, 2100))};
  const auto neg = augment_negatives(stop, audio, mel, vad);
  REQUIRE(neg.size() == 1);
  CHECK(std::abs(neg[0].start_ms() - 5000) <= 250);
  CHECK(std::abs(neg[0].end_ms() - 6000) <= 250);
}

TEST_CASE("training chunks are balanced, seeded and augmented") {
  MelExtractor mel;
  EnergyVad vad("vad");
  Manifest m;
  StopRecord stop;
  stop.stop_id = "s";
  stop.audio_path = "s.wav";
  stop.utterances = {utt("o1", SpeakerRole::primary_officer, Segment::from_millis(1000, 3000)),
                     utt("c1", SpeakerRole::community_member, Segment::from_millis(4000, 5000)),
                     utt("quiet", SpeakerRole::community_member, Segment::from_millis(8000, 9000))};
  m.stops.push_back(stop);
  const auto audio = bursts(12000, {Segment::from_millis(1000, 3000), Segment::from_millis(4000, 5000),
                                    Segment::from_millis(10000, 11000)});
  TrainingChunkConfig cfg;
  cfg.per_class = 10;
  cfg.seed = 4;
  TrainingChunkStats st;
  const auto chunks = build_training_chunks(m, [&](const StopRecord&) { return audio; }, mel, vad, cfg, &st);
  CHECK(st.utterances_dropped_vad == 1);
  CHECK(st.negative_segments == 1);
  CHECK(st.officer_available == chunk_span(Segment::from_millis(1000, 3000)).size());
  REQUIRE(chunks.size() == 20);
  std::size_t officers = 0;
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    const auto& c = chunks[i];
    officers += c.label == ChunkLabel::officer;
    CHECK((c.label == ChunkLabel::officer) == (i < 10));
    CHECK(c.gain > 0.099f);
    CHECK(c.gain <= 1.0f);
  }
  CHECK(officers == 10);
  CHECK(st.augmented > 0);
  CHECK(st.augmented < 20);
  const auto again = build_training_chunks(m, [&](const StopRecord&) { return audio; }, mel, vad, cfg);
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    CHECK(again[i].segment == chunks[i].segment);
    CHECK(again[i].gain == chunks[i].gain);
  }
  LabeledChunk half{0, Segment::from_millis(1000, 1250), ChunkLabel::officer, 0.5f};
  const auto samples = chunk_samples(audio, half);
  REQUIRE(samples.size() == 4000);
  CHECK(samples[7] == audio.samples[16000 + 7] * 0.5f);
}

TEST_CASE("detect_officer_segments finds scripted officer speech") {
  MelExtractor mel;
  EnergyVad vad("vad");
  ScriptedScorer officer([](const Segment& s) { return s.start_ms() < 4000 ? 0.9 : 0.1; });
  const auto audio = bursts(8000, {Segment::from_millis(1000, 3000), Segment::from_millis(5000, 7000)});
  const auto d = detect_officer_segments(audio, mel, vad, officer, {0.5, 0.5, 1.0});
  REQUIRE(d.size() == 1);
  CHECK(std::abs(d[0].segment.start_ms() - 1000) <= 250);
  CHECK(std::abs(d[0].segment.end_ms() - 3000) <= 250);
}

TEST_CASE("segment F1") {
  const std::vector<Segment> truth{Segment::from_millis(0, 1000), Segment::from_millis(2000, 3000)};
  const std::vector<Segment> det{Segment::from_millis(100, 900), Segment::from_millis(5000, 6000)};
  const auto r = segment_f1(det, truth);
  CHECK(r.correct == 1);
  CHECK(r.recalled == 1);
  CHECK(r.precision == 0.5);
  CHECK(r.recall == 0.5);
  CHECK(r.f1 == 0.5);
  const auto empty = segment_f1({}, truth);
  CHECK(empty.precision == 1.0);
  CHECK(empty.recall == 0.0);
  CHECK(empty.f1 == 0.0);
  const auto none = segment_f1({}, {});
  CHECK(none.f1 == 1.0);
  const SegmentF1 parts[] = {r, segment_f1(truth, truth)};
  const auto pooled = pool_f1(parts);
  CHECK(pooled.correct == 3);
  CHECK(pooled.precision == 0.75);
}

TEST_CASE("detection WER concatenates officer references") {
  auto truth = std::make_shared<WordTruth>();
  truth->add("s.wav", {{"hands", Segment::from_millis(1000, 1400), SpeakerRole::primary_officer, "o1"},
                       {"up", Segment::from_millis(1500, 1900), SpeakerRole::primary_officer, "o1"},
                       {"ok", Segment::from_millis(4000, 4400), SpeakerRole::community_member, "c1"}});
  EchoTranscriber echo("echo", truth);
  StopRecord stop;
  stop.stop_id = "s";
  stop.audio_path = "s.wav";
  stop.utterances = {utt("o1", SpeakerRole::primary_officer, Segment::from_millis(900, 2000), "Hands up!"),
                     utt("c1", SpeakerRole::community_member, Segment::from_millis(3900, 4500), "ok")};
  CHECK(officer_references(stop).size() == 1);
  const AudioRef audio{"s.wav", 6000};
  const std::vector<Segment> perfect{Segment::from_millis(900, 2000)};
  CHECK(evaluate_detection(perfect, stop, audio, echo).score.value == 0.0);
  const std::vector<Segment> extra{Segment::from_millis(900, 2000), Segment::from_millis(3900, 4500)};
  const auto e = evaluate_detection(extra, stop, audio, echo);
  CHECK(e.score.value == 0.5);
  CHECK(e.insertion_pct == 50.0);
  const std::vector<Segment> oob{Segment::from_millis(5000, 7000)};
  const auto f = evaluate_detection(oob, stop, audio, echo);
  CHECK(f.failed_segments == 1);
  CHECK(f.deletion_pct == 100.0);
}
