#include "bwc/detect.hpp"

#include <algorithm>
#include <cmath>

#include "bwc/errors.hpp"
#include "bwc/parallel.hpp"
#include "bwc/rng.hpp"

namespace bwc {

namespace {

constexpr std::size_t kFramesPerHop = kChunkHopMs * kSampleRate / 1000 / MelConfig::kHop;  // 10

MelFeatures slice_frames(const MelFeatures& all, std::size_t first, std::size_t count) {
  MelFeatures f;
  f.bins = all.bins;
  f.frames = count;
  const auto begin = all.values.begin() + static_cast<std::ptrdiff_t>(first * all.bins);
  f.values.assign(begin, begin + static_cast<std::ptrdiff_t>(count * all.bins));
  return f;
}

std::int64_t to_ms(double seconds) { return static_cast<std::int64_t>(std::llround(seconds * 1000.0)); }

}  // namespace

void DetectorThresholds::validate() const {
  const auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!unit(t_vad)) throw ValidationError("t_vad must lie in [0, 1]");
  if (!unit(t_officer)) throw ValidationError("t_officer must lie in [0, 1]");
  if (!(t_smooth >= 0.25 && t_smooth <= 2.0)) throw ValidationError("t_smooth must lie in [0.25, 2]");
}

std::vector<Segment> chunk_stream(std::int64_t duration_ms, std::int64_t offset_ms) {
  std::vector<Segment> out;
  for (std::int64_t s = 0; s + kChunkMs <= duration_ms; s += kChunkHopMs) {
    out.push_back(Segment::from_millis(offset_ms + s, offset_ms + s + kChunkMs));
  }
  return out;
}

std::vector<Segment> chunk_span(const Segment& span) { return chunk_stream(span.duration_ms(), span.start_ms()); }

std::vector<MelFeatures> stream_chunk_features(const Audio& audio, const MelExtractor& mel) {
  const auto all = mel.compute(audio.samples);
  const auto chunks = chunk_stream(audio.duration_ms());
  const std::size_t per_chunk = mel_frame_count(kChunkMs * kSampleRate / 1000);
  std::vector<MelFeatures> out;
  out.reserve(chunks.size());
  for (std::size_t k = 0; k < chunks.size(); ++k) out.push_back(slice_frames(all, k * kFramesPerHop, per_chunk));
  return out;
}

std::vector<ChunkScore> score_stream(const Audio& audio, const MelExtractor& mel, FrameScorer& vad,
                                     FrameScorer* officer, const std::string& audio_path) {
  if (audio.sample_rate != kSampleRate) throw PreconditionError("audio must be 16 kHz");
  const auto all = mel.compute(audio.samples);
  const auto chunks = chunk_stream(audio.duration_ms());
  const std::size_t per_chunk = mel_frame_count(kChunkMs * kSampleRate / 1000);
  std::vector<ChunkScore> out;
  out.reserve(chunks.size());
  for (std::size_t k = 0; k < chunks.size(); ++k) {
    const auto f = slice_frames(all, k * kFramesPerHop, per_chunk);
    const ChunkContext ctx{audio_path, chunks[k]};
    ChunkScore s;
    s.segment = chunks[k];
    s.vad = vad.score_frames(f, ctx);
    s.officer = officer ? officer->score_frames(f, ctx) : 0.0;
    out.push_back(s);
  }
  return out;
}

std::vector<DetectedSegment> gate_and_merge(std::span<const ChunkScore> scores, const DetectorThresholds& th) {
  th.validate();
  const std::int64_t gap = to_ms(th.t_smooth);
  std::vector<DetectedSegment> out;
  std::size_t members = 0;
  const auto close = [&] {
    if (members == 0) return;
    out.back().vad /= double(members);
    out.back().officer /= double(members);
    members = 0;
  };
  for (const auto& c : scores) {
    if (!(c.vad > th.t_vad && c.officer > th.t_officer)) continue;
    if (members > 0 && c.segment.start_ms() - out.back().segment.end_ms() <= gap) {
      auto& cur = out.back();
      cur.segment = Segment::from_millis(cur.segment.start_ms(), std::max(cur.segment.end_ms(), c.segment.end_ms()));
      cur.vad += c.vad;
      cur.officer += c.officer;
      ++members;
      continue;
    }
    close();
    out.push_back({c.segment, c.vad, c.officer});
    members = 1;
  }
  close();
  return out;
}

std::vector<DetectedSegment> detect_officer_segments(const Audio& audio, const MelExtractor& mel,
                                                     FrameScorer& vad, FrameScorer& officer,
                                                     const DetectorThresholds& th, const std::string& audio_path) {
  th.validate();
  const auto scores = score_stream(audio, mel, vad, &officer, audio_path);
  return gate_and_merge(scores, th);
}

std::vector<Segment> merge_segments(std::span<const Segment> sorted, std::int64_t max_gap_ms) {
  std::vector<Segment> out;
  for (const auto& s : sorted) {
    if (!out.empty() && s.start_ms() - out.back().end_ms() <= max_gap_ms) {
      out.back() = Segment::from_millis(out.back().start_ms(), std::max(out.back().end_ms(), s.end_ms()));
    } else {
      out.push_back(s);
    }
  }
  return out;
}

std::vector<Segment> augment_negatives(std::span<const ChunkScore> stream_scores, const StopRecord& stop,
                                       const NegativeConfig& config) {
  std::vector<Segment> kept;
  for (const auto& c : stream_scores) {
    if (c.vad >= config.min_vad) kept.push_back(c.segment);
  }
  std::sort(kept.begin(), kept.end());
  const auto merged = merge_segments(kept, to_ms(config.merge_gap_s));
  std::vector<Segment> out;
  for (const auto& m : merged) {
    const bool overlaps = std::any_of(stop.utterances.begin(), stop.utterances.end(), [&](const Utterance& u) {
      return u.segment && u.segment->overlap_ms(m) > 0;
    });
    if (!overlaps) out.push_back(m);
  }
  return out;
}

std::vector<Segment> augment_negatives(const StopRecord& stop, const Audio& audio, const MelExtractor& mel,
                                       FrameScorer& vad, const NegativeConfig& config) {
  const auto scores = score_stream(audio, mel, vad, nullptr, stop.audio_path);
  return augment_negatives(scores, stop, config);
}

std::vector<float> chunk_samples(const Audio& audio, const LabeledChunk& chunk) {
  const auto [first, last] = sample_range(chunk.segment, audio.sample_rate);
  if (last > audio.samples.size()) throw PreconditionError("chunk runs past the end of the audio");
  std::vector<float> out(audio.samples.begin() + static_cast<std::ptrdiff_t>(first),
                         audio.samples.begin() + static_cast<std::ptrdiff_t>(last));
  if (chunk.gain != 1.0f) {
    for (auto& v : out) v *= chunk.gain;
  }
  return out;
}

std::vector<LabeledChunk> build_training_chunks(const Manifest& manifest, const AudioLoader& load,
                                                const MelExtractor& mel, FrameScorer& vad,
                                                const TrainingChunkConfig& config, TrainingChunkStats* stats) {
  struct PerStop {
    std::vector<LabeledChunk> officer, other;
    std::size_t dropped = 0;
    std::size_t negatives = 0;
  };
  std::vector<PerStop> per(manifest.stops.size());
  parallel_for(manifest.stops.size(), config.jobs, [&](std::size_t si) {
    const auto& stop = manifest.stops[si];
    const Audio audio = load(stop);
    auto& acc = per[si];
    for (const auto& u : stop.utterances) {
      if (!u.segment || u.segment->end_ms() > audio.duration_ms()) continue;
      const auto f = mel.frame_mel(audio, *u.segment);
      if (vad.score_frames(f, ChunkContext{stop.audio_path, u.segment}) < config.utterance_min_vad) {
        ++acc.dropped;
        continue;
      }
      const auto label = u.speaker_role == SpeakerRole::primary_officer ? ChunkLabel::officer : ChunkLabel::not_officer;
      auto& dest = label == ChunkLabel::officer ? acc.officer : acc.other;
      for (const auto& c : chunk_span(*u.segment)) dest.push_back({si, c, label, 1.0f});
    }
    const auto stream = score_stream(audio, mel, vad, nullptr, stop.audio_path);
    const auto negatives = augment_negatives(stream, stop, config.negatives);
    acc.negatives = negatives.size();
    for (const auto& n : negatives) {
      for (const auto& c : chunk_span(n)) acc.other.push_back({si, c, ChunkLabel::not_officer, 1.0f});
    }
  });

  std::vector<LabeledChunk> officer, other;
  TrainingChunkStats st;
  for (auto& p : per) {
    officer.insert(officer.end(), p.officer.begin(), p.officer.end());
    other.insert(other.end(), p.other.begin(), p.other.end());
    st.utterances_dropped_vad += p.dropped;
    st.negative_segments += p.negatives;
  }
  st.officer_available = officer.size();
  st.not_officer_available = other.size();
  if (officer.empty()) throw PreconditionError("no officer chunks available for training");
  if (other.empty()) throw PreconditionError("no not-officer chunks available for training");

  Rng sampler(derive_seed(config.seed, "sampling"));
  const auto take = [&](std::vector<LabeledChunk>& pool) {
    sampler.shuffle(pool);
    if (pool.size() > config.per_class) pool.resize(config.per_class);
  };
  take(officer);
  take(other);

  std::vector<LabeledChunk> out = std::move(officer);
  out.insert(out.end(), other.begin(), other.end());
  Rng augment(derive_seed(config.seed, "augment"));
  const double lo = std::log(config.augment_min_gain), hi = std::log(config.augment_max_gain);
  for (auto& c : out) {
    if (augment.bernoulli(config.augment_probability)) {
      c.gain = static_cast<float>(std::exp(augment.uniform(lo, hi)));
      ++st.augmented;
    }
  }
  if (stats) *stats = st;
  return out;
}

std::vector<TimedText> officer_references(const StopRecord& stop) {
  std::vector<TimedText> refs;
  for (const auto& u : stop.utterances) {
    if (u.speaker_role == SpeakerRole::primary_officer && u.segment) refs.emplace_back(*u.segment, u.raw_text);
  }
  std::stable_sort(refs.begin(), refs.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  return refs;
}

DetectionWer detection_wer_from_counts(const EditCounts& counts, std::size_t failed) {
  DetectionWer out;
  out.score = score_from_counts(counts);
  out.failed_segments = failed;
  if (counts.reference_length > 0) {
    const double n = double(counts.reference_length);
    out.substitution_pct = 100.0 * double(counts.substitutions) / n;
    out.deletion_pct = 100.0 * double(counts.deletions) / n;
    out.insertion_pct = 100.0 * double(counts.insertions) / n;
  }
  return out;
}

DetectionWer evaluate_detection(std::span<const Segment> detected, const StopRecord& stop, const AudioRef& audio,
                                Transcriber& transcriber) {
  std::vector<TimedText> hyps;
  std::size_t failed = 0;
  for (const auto& seg : detected) {
    std::string text;
    try {
      text = transcriber.transcribe(audio, seg);
    } catch (const Error&) {
      ++failed;
    }
    hyps.emplace_back(seg, std::move(text));
  }
  std::stable_sort(hyps.begin(), hyps.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  const auto refs = officer_references(stop);
  return detection_wer_from_counts(concat_wer(refs, hyps).counts, failed);
}

SegmentF1 segment_f1(std::span<const Segment> detected, std::span<const Segment> truth) {
  SegmentF1 r;
  r.detected = detected.size();
  r.truth = truth.size();
  std::vector<Segment> sorted_truth(truth.begin(), truth.end());
  std::sort(sorted_truth.begin(), sorted_truth.end());
  const auto truth_union = merge_segments(sorted_truth, 0);
  for (const auto& d : detected) {
    std::int64_t covered = 0;
    for (const auto& t : truth_union) covered += d.overlap_ms(t);
    if (2 * covered >= d.duration_ms()) ++r.correct;
  }
  for (const auto& t : truth) {
    const bool hit = std::any_of(detected.begin(), detected.end(),
                                 [&](const Segment& d) { return 2 * d.overlap_ms(t) >= t.duration_ms(); });
    if (hit) ++r.recalled;
  }
  return pool_f1(std::span<const SegmentF1>(&r, 1));
}

SegmentF1 pool_f1(std::span<const SegmentF1> parts) {
  SegmentF1 r;
  for (const auto& p : parts) {
    r.correct += p.correct;
    r.detected += p.detected;
    r.recalled += p.recalled;
    r.truth += p.truth;
  }
  r.precision = r.detected == 0 ? 1.0 : double(r.correct) / double(r.detected);
  r.recall = r.truth == 0 ? 1.0 : double(r.recalled) / double(r.truth);
  r.f1 = r.precision + r.recall > 0 ? 2 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  return r;
}

}  // namespace bwc
