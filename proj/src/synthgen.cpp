#include "bwc/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "bwc/errors.hpp"
#include "bwc/parallel.hpp"
#include "bwc/rng.hpp"

namespace bwc {

namespace {

constexpr std::int64_t kWordGapMs = 60;
constexpr std::int64_t kEdgeMs = 15;
constexpr double kBaseAmplitude = 0.12;
constexpr int kHarmonics = 5;
constexpr std::int64_t kSamplesPerMs = kSampleRate / 1000;

std::int64_t seconds_to_ms(double s) { return static_cast<std::int64_t>(std::llround(s * 1000.0)); }

std::string pad3(std::size_t i) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%03zu", i);
  return buf;
}

}  // namespace

void SceneSpec::validate() const {
  if (!(duration_s > 0)) throw ValidationError("scene duration must be positive");
  if (!(noise_floor >= 0)) throw ValidationError("noise_floor must be non-negative");
  if (!(overlap_probability >= 0 && overlap_probability <= 1)) {
    throw ValidationError("overlap_probability must lie in [0, 1]");
  }
  if (!(min_gap_s >= 0 && max_gap_s >= min_gap_s)) throw ValidationError("gap range is invalid");
  if (min_words < 1 || max_words < min_words) throw ValidationError("word-count range is invalid");
  for (const auto& s : speakers) {
    if (!(s.gain > 0 && s.gain <= 1)) throw ValidationError("speaker gains must lie in (0, 1]");
  }
}

const std::vector<std::string>& default_vocabulary() {
  static const std::vector<std::string> words{
      "license", "registration", "insurance", "vehicle", "stop",     "speed",   "sir",     "ma'am",
      "okay",    "yes",          "no",        "please",  "step",     "out",     "car",     "hands",
      "wheel",   "window",       "thank",     "you",     "where",    "going",   "tonight", "today",
      "light",   "signal",       "lane",      "ticket",  "warning",  "address", "name",    "phone",
      "right",   "left",         "back",      "minute",  "officer",  "driver",  "seat",    "belt",
      "mirror",  "plate",        "expired",   "sorry",   "home",     "work",    "late",    "safe"};
  return words;
}

std::int64_t word_duration_ms(const std::string& word) {
  const double s = std::clamp(0.16 + 0.045 * double(word.size()), 0.2, 0.6);
  return seconds_to_ms(s);
}

std::vector<float> render_word(const std::string& word, std::int64_t duration_ms, double gain) {
  const std::uint64_t h = fnv1a64(word);
  const double f0 = 110.0 + double(h % 160);
  const double am_hz = 3.0 + double((h >> 12) % 5);
  const auto n = static_cast<std::size_t>(duration_ms * kSamplesPerMs);
  const auto edge = static_cast<std::size_t>(kEdgeMs * kSamplesPerMs);
  std::vector<double> phase(kHarmonics);
  for (int k = 0; k < kHarmonics; ++k) {
    phase[static_cast<std::size_t>(k)] = 2.0 * M_PI * double((mix64(h + std::uint64_t(k)) >> 11) % 1000) / 1000.0;
  }
  std::vector<float> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = double(i) / kSampleRate;
    double v = 0.0;
    for (int k = 1; k <= kHarmonics; ++k) {
      v += std::sin(2.0 * M_PI * f0 * k * t + phase[static_cast<std::size_t>(k - 1)]) / k;
    }
    double env = 0.75 + 0.25 * std::sin(2.0 * M_PI * am_hz * t);
    if (i < edge) env *= 0.5 - 0.5 * std::cos(M_PI * double(i) / double(edge));
    if (n - 1 - i < edge) env *= 0.5 - 0.5 * std::cos(M_PI * double(n - 1 - i) / double(edge));
    out[i] = static_cast<float>(gain * kBaseAmplitude * env * v);
  }
  return out;
}

GeneratedStop generate_stop(const SceneSpec& spec) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, "scene:" + spec.stop_id));
  const std::int64_t total_ms = seconds_to_ms(spec.duration_s);

  struct Planned {
    std::size_t speaker;
    std::vector<std::string> words;
    std::vector<Segment> spans;
  };
  std::vector<std::size_t> order;
  for (std::size_t s = 0; s < spec.speakers.size(); ++s) {
    for (std::size_t u = 0; u < spec.speakers[s].utterances; ++u) order.push_back(s);
  }
  rng.shuffle(order);

  std::vector<Planned> planned;
  std::int64_t cursor = seconds_to_ms(rng.uniform(0.2, 0.6));
  for (std::size_t s : order) {
    const auto& sp = spec.speakers[s];
    const auto& vocab = sp.vocabulary.empty() ? default_vocabulary() : sp.vocabulary;
    if (vocab.empty()) throw ValidationError("speaker vocabulary is empty");
    Planned p{s, {}, {}};
    const std::size_t count = spec.min_words + rng.below(spec.max_words - spec.min_words + 1);
    std::int64_t length = 0;
    for (std::size_t w = 0; w < count; ++w) {
      p.words.push_back(vocab[rng.below(vocab.size())]);
      length += word_duration_ms(p.words.back()) + (w ? kWordGapMs : 0);
    }
    std::int64_t start = cursor;
    if (!planned.empty() && rng.bernoulli(spec.overlap_probability)) {
      const auto& prev = planned.back().spans;
      const std::int64_t ps = prev.front().start_ms(), pe = prev.back().end_ms();
      start = ps + static_cast<std::int64_t>(rng.uniform(0.2, 0.8) * double(pe - ps));
    }
    std::int64_t t = start;
    for (const auto& w : p.words) {
      const auto d = word_duration_ms(w);
      p.spans.push_back(Segment::from_millis(t, t + d));
      t += d + kWordGapMs;
    }
    const std::int64_t end = p.spans.back().end_ms();
    if (end > total_ms) {
      throw InfeasibleError("stop " + spec.stop_id + ": " + std::to_string(order.size()) +
                            " utterances do not fit in " + std::to_string(spec.duration_s) + " s");
    }
    cursor = std::max(cursor, end) + seconds_to_ms(rng.uniform(spec.min_gap_s, spec.max_gap_s));
    planned.push_back(std::move(p));
  }

  GeneratedStop out;
  const auto n = static_cast<std::size_t>(total_ms * kSamplesPerMs);
  std::vector<double> mix(n, 0.0);
  out.record.stop_id = spec.stop_id;
  out.record.audio_path = spec.audio_path;
  out.record.primary_officer_ids = spec.primary_officer_ids;
  out.record.all_officer_ids = spec.all_officer_ids;
  out.record.driver_race = spec.driver_race;
  out.record.driver_gender = spec.driver_gender;
  out.record.officer_race = spec.officer_race;
  out.record.officer_gender = spec.officer_gender;

  std::sort(planned.begin(), planned.end(),
            [](const Planned& a, const Planned& b) { return a.spans.front() < b.spans.front(); });
  std::size_t next_id = 0;
  for (const auto& p : planned) {
    const auto& sp = spec.speakers[p.speaker];
    const double gain = sp.role == SpeakerRole::primary_officer ? 1.0 : sp.gain;
    std::string id;
    if (sp.transcribed) id = spec.stop_id + "-u" + pad3(next_id++);
    std::string text;
    for (std::size_t w = 0; w < p.words.size(); ++w) {
      const auto samples = render_word(p.words[w], p.spans[w].duration_ms(), gain);
      const auto first = static_cast<std::size_t>(p.spans[w].start_ms() * kSamplesPerMs);
      for (std::size_t i = 0; i < samples.size(); ++i) mix[first + i] += samples[i];
      out.truth.push_back({p.words[w], p.spans[w], sp.role, id});
      text += (w ? " " : "") + p.words[w];
    }
    if (!sp.transcribed) continue;
    Utterance u;
    u.id = id;
    u.speaker_role = sp.role;
    u.raw_text = text;
    const Segment seg = Segment::from_millis(p.spans.front().start_ms(), p.spans.back().end_ms());
    u.segment = seg;
    u.raw_start_s = seg.start_ms() / 1000;
    u.raw_end_s = (seg.end_ms() + 999) / 1000;
    out.record.utterances.push_back(std::move(u));
  }
  if (spec.noise_floor > 0) {
    Rng noise(derive_seed(spec.seed, "noise:" + spec.stop_id));
    for (auto& v : mix) v += spec.noise_floor * noise.normal();
  }
  out.audio.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.audio.samples[i] = static_cast<float>(std::clamp(mix[i], -1.0, 1.0));
  normalize_and_validate(out.record);
  return out;
}

SceneSpec corpus_scene(const CorpusSpec& spec, std::size_t index) {
  SceneSpec s;
  s.stop_id = "stop-" + pad3(index);
  s.audio_path = "audio/" + s.stop_id + ".wav";
  s.duration_s = spec.duration_s;
  s.noise_floor = spec.noise_floor;
  s.overlap_probability = spec.overlap_probability;
  s.min_gap_s = spec.min_gap_s;
  s.max_gap_s = spec.max_gap_s;
  s.min_words = spec.min_words;
  s.max_words = spec.max_words;
  s.seed = spec.seed;
  const std::size_t pool = spec.officer_pool ? spec.officer_pool : (spec.stops + 1) / 2;
  const std::string primary = "officer-" + pad3(index % std::max<std::size_t>(pool, 1));
  s.primary_officer_ids = {primary};
  s.all_officer_ids = {primary};
  s.driver_race = index % 2 == 0 ? Race::black : Race::white;
  s.driver_gender = (index / 2) % 2 == 0 ? Gender::male : Gender::female;
  const std::uint64_t oh = mix64(derive_seed(spec.seed, primary));
  s.officer_race = oh % 2 == 0 ? Race::black : Race::white;
  s.officer_gender = (oh >> 8) % 3 == 0 ? Gender::female : Gender::male;
  s.speakers.push_back({SpeakerRole::primary_officer, 1.0, spec.officer_utterances, {}, true});
  if (spec.community_utterances) {
    s.speakers.push_back({SpeakerRole::community_member, spec.community_gain, spec.community_utterances, {}, true});
  }
  if (spec.secondary_utterances) {
    const std::string second = "officer-" + pad3((index + 1) % std::max<std::size_t>(pool, 1));
    if (second != primary) s.all_officer_ids.push_back(second);
    s.speakers.push_back({SpeakerRole::secondary_officer, spec.secondary_gain, spec.secondary_utterances, {}, true});
  }
  if (spec.dispatch_utterances) {
    s.speakers.push_back({SpeakerRole::dispatch, spec.dispatch_gain, spec.dispatch_utterances, {}, false});
  }
  return s;
}

GeneratedCorpus generate_corpus(const CorpusSpec& spec, const std::filesystem::path& out_dir, std::size_t jobs) {
  std::filesystem::create_directories(out_dir / "audio");
  std::vector<GeneratedStop> stops(spec.stops);
  parallel_for(spec.stops, jobs, [&](std::size_t i) {
    stops[i] = generate_stop(corpus_scene(spec, i));
    write_wav(out_dir / stops[i].record.audio_path, stops[i].audio.samples);
  });
  GeneratedCorpus out;
  for (auto& g : stops) {
    out.truth.add(g.record.audio_path, g.truth);
    out.manifest.stops.push_back(std::move(g.record));
  }
  validate(out.manifest);
  save_manifest(out.manifest, out_dir / "manifest.jsonl");
  out.truth.save(out_dir / "truth.jsonl");
  return out;
}

}  // namespace bwc
