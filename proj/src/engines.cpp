#include "bwc/engines.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "bwc/rng.hpp"
#include "bwc/textnorm.hpp"

namespace bwc {

using nlohmann::json;

std::string_view to_string(EngineKind k) {
  switch (k) {
    case EngineKind::transcriber: return "transcriber";
    case EngineKind::forced_aligner: return "forced_aligner";
    case EngineKind::frame_scorer: return "frame_scorer";
  }
  return "transcriber";
}

std::string_view to_string(Transport t) {
  return t == Transport::subprocess ? "subprocess" : "in_process_mock";
}

EngineKind parse_engine_kind(std::string_view s) {
  if (s == "transcriber") return EngineKind::transcriber;
  if (s == "forced_aligner") return EngineKind::forced_aligner;
  if (s == "frame_scorer") return EngineKind::frame_scorer;
  throw ValidationError("unknown engine kind '" + std::string(s) + "'");
}

Transport parse_transport(std::string_view s) {
  if (s == "in_process_mock") return Transport::in_process_mock;
  if (s == "subprocess") return Transport::subprocess;
  throw ValidationError("unknown engine transport '" + std::string(s) + "'");
}

std::string_view to_string(EngineFailure f) {
  switch (f) {
    case EngineFailure::unavailable: return "unavailable";
    case EngineFailure::out_of_bounds: return "out_of_bounds";
    case EngineFailure::alignment_failure: return "alignment_failure";
    case EngineFailure::precondition: return "precondition";
    case EngineFailure::shape_mismatch: return "shape_mismatch";
    case EngineFailure::timeout: return "timeout";
    case EngineFailure::protocol: return "protocol";
  }
  return "unavailable";
}

void check_bounds(const EngineDescriptor& engine, const AudioRef& audio, const Segment& segment) {
  if (segment.end_ms() > audio.duration_ms) {
    throw EngineError(EngineFailure::out_of_bounds, engine.name,
                      "segment ends at " + std::to_string(segment.end()) + " s but '" + audio.path +
                          "' lasts " + std::to_string(double(audio.duration_ms) / 1000.0) + " s");
  }
}

void check_shape(const EngineDescriptor& engine, const MelFeatures& features, std::size_t bins) {
  if (features.bins != bins || features.values.size() != features.bins * features.frames) {
    throw EngineError(EngineFailure::shape_mismatch, engine.name,
                      "expected " + std::to_string(bins) + " mel bins, got " +
                          std::to_string(features.bins));
  }
}

std::vector<WordTiming> uniform_word_timings(const Segment& segment, std::size_t count) {
  std::vector<WordTiming> out;
  if (count == 0) return out;
  const auto start = segment.start_ms();
  const auto dur = segment.duration_ms();
  if (dur < static_cast<std::int64_t>(count)) return out;
  for (std::size_t i = 0; i < count; ++i) {
    const auto s = start + dur * static_cast<std::int64_t>(i) / static_cast<std::int64_t>(count);
    const auto e = start + dur * static_cast<std::int64_t>(i + 1) / static_cast<std::int64_t>(count);
    out.push_back({std::string(), Segment::from_millis(s, e)});
  }
  return out;
}

// ---------------------------------------------------------------------------

void WordTruth::add(const std::string& audio_path, std::vector<TruthWord> words) {
  std::stable_sort(words.begin(), words.end(),
                   [](const TruthWord& a, const TruthWord& b) { return a.span.start_ms() < b.span.start_ms(); });
  auto& slot = by_audio_[audio_path];
  slot.insert(slot.end(), words.begin(), words.end());
  std::stable_sort(slot.begin(), slot.end(),
                   [](const TruthWord& a, const TruthWord& b) { return a.span.start_ms() < b.span.start_ms(); });
}

const std::vector<TruthWord>& WordTruth::words(const std::string& audio_path) const {
  static const std::vector<TruthWord> empty;
  const auto it = by_audio_.find(audio_path);
  return it == by_audio_.end() ? empty : it->second;
}

WordTruth WordTruth::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open word truth '" + path.string() + "'");
  WordTruth truth;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      std::vector<TruthWord> words;
      for (const auto& jw : j.at("words")) {
        words.push_back({jw.at("w").get<std::string>(),
                         Segment::from_seconds(jw.at("s").get<double>(), jw.at("e").get<double>()),
                         parse_role(jw.at("role").get<std::string>()), jw.at("utt").get<std::string>()});
      }
      truth.add(j.at("audio_path").get<std::string>(), std::move(words));
    } catch (const json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + e.what(), line_no);
    }
  }
  return truth;
}

void WordTruth::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write word truth '" + path.string() + "'");
  for (const auto& [audio, words] : by_audio_) {
    json jw = json::array();
    for (const auto& w : words) {
      jw.push_back({{"w", w.word}, {"s", w.span.start()}, {"e", w.span.end()},
                    {"role", to_string(w.role)}, {"utt", w.utterance_id}});
    }
    out << json{{"audio_path", audio}, {"words", std::move(jw)}}.dump() << '\n';
  }
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

// ---------------------------------------------------------------------------

TableTranscriber::TableTranscriber(std::string name)
    : desc_{std::move(name), EngineKind::transcriber, Transport::in_process_mock} {}

void TableTranscriber::set(const std::string& audio_path, const Segment& segment, std::string text) {
  table_[{audio_path, segment.start_ms(), segment.end_ms()}] = std::move(text);
}

std::string TableTranscriber::transcribe(const AudioRef& audio, const Segment& segment) {
  check_bounds(desc_, audio, segment);
  const auto it = table_.find({audio.path, segment.start_ms(), segment.end_ms()});
  return it == table_.end() ? std::string() : it->second;
}

EchoTranscriber::EchoTranscriber(std::string name, std::shared_ptr<const WordTruth> truth)
    : desc_{std::move(name), EngineKind::transcriber, Transport::in_process_mock}, truth_(std::move(truth)) {}

std::string EchoTranscriber::transcribe(const AudioRef& audio, const Segment& segment) {
  check_bounds(desc_, audio, segment);
  std::string out;
  for (const auto& w : truth_->words(audio.path)) {
    if (w.span.start_ms() >= segment.end_ms()) break;
    if (2 * w.span.overlap_ms(segment) >= w.span.duration_ms()) {
      if (!out.empty()) out.push_back(' ');
      out += w.word;
    }
  }
  return out;
}

// Seeded mocks hash the file name only, so a corpus copied elsewhere
// (or synthesized under another --out) draws the same noise.
static std::uint64_t audio_key(const AudioRef& audio) {
  return fnv1a64(std::filesystem::path(audio.path).filename().string());
}

DegradedTranscriber::DegradedTranscriber(std::string name, std::shared_ptr<Transcriber> inner,
                                         double dropout, std::uint64_t seed)
    : desc_{std::move(name), EngineKind::transcriber, Transport::in_process_mock},
      inner_(std::move(inner)),
      dropout_(dropout),
      seed_(seed) {
  if (!(dropout >= 0.0 && dropout <= 1.0)) throw ValidationError("dropout must be in [0, 1]");
}

std::string DegradedTranscriber::transcribe(const AudioRef& audio, const Segment& segment) {
  const auto words = split_whitespace(inner_->transcribe(audio, segment));
  const std::uint64_t key = mix64(seed_ ^ audio_key(audio)) ^
                            mix64(static_cast<std::uint64_t>(segment.start_ms()) * 1000003ULL +
                                  static_cast<std::uint64_t>(segment.end_ms()));
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    const double u = static_cast<double>(mix64(key + i) >> 11) * 0x1.0p-53;
    if (u < dropout_) continue;
    if (!out.empty()) out.push_back(' ');
    out += words[i];
  }
  return out;
}

UniformAligner::UniformAligner(std::string name)
    : desc_{std::move(name), EngineKind::forced_aligner, Transport::in_process_mock} {}

std::vector<WordTiming> UniformAligner::force_align(const AudioRef& audio, const Segment& segment,
                                                    std::string_view transcript) {
  const auto tokens = normalize(transcript).tokens;
  if (tokens.empty()) throw EngineError(EngineFailure::precondition, desc_.name, "empty transcript");
  check_bounds(desc_, audio, segment);
  auto out = uniform_word_timings(segment, tokens.size());
  if (out.empty()) {
    throw EngineError(EngineFailure::alignment_failure, desc_.name, "segment too short for transcript");
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i].word = tokens[i];
  return out;
}

JitterAligner::JitterAligner(std::string name, std::shared_ptr<const WordTruth> truth, double jitter_s,
                             std::uint64_t seed)
    : desc_{std::move(name), EngineKind::forced_aligner, Transport::in_process_mock},
      truth_(std::move(truth)),
      jitter_s_(jitter_s),
      seed_(seed) {}

std::vector<WordTiming> JitterAligner::force_align(const AudioRef& audio, const Segment& segment,
                                                   std::string_view transcript) {
  const auto tokens = normalize(transcript).tokens;
  if (tokens.empty()) throw EngineError(EngineFailure::precondition, desc_.name, "empty transcript");
  check_bounds(desc_, audio, segment);

  std::vector<const TruthWord*> inside;
  std::vector<std::string> inside_tokens;
  for (const auto& w : truth_->words(audio.path)) {
    if (w.span.start_ms() >= segment.end_ms()) break;
    if (2 * w.span.overlap_ms(segment) >= w.span.duration_ms()) {
      inside.push_back(&w);
      const auto norm = normalize(w.word).tokens;
      inside_tokens.push_back(norm.empty() ? std::string() : norm.front());
    }
  }

  // Tightest window of truth words containing the tokens as a subsequence.
  std::vector<std::size_t> best;
  std::int64_t best_span = std::numeric_limits<std::int64_t>::max();
  for (std::size_t i = 0; i < inside.size(); ++i) {
    if (inside_tokens[i] != tokens[0]) continue;
    std::vector<std::size_t> match{i};
    for (std::size_t j = i + 1; j < inside.size() && match.size() < tokens.size(); ++j) {
      if (inside_tokens[j] == tokens[match.size()]) match.push_back(j);
    }
    if (match.size() != tokens.size()) break;  // later starts cannot match either
    const auto span = inside[match.back()]->span.end_ms() - inside[match.front()]->span.start_ms();
    if (span < best_span) {
      best_span = span;
      best = std::move(match);
    }
  }
  if (best.empty()) {
    throw EngineError(EngineFailure::alignment_failure, desc_.name,
                      "transcript not found inside segment of '" + audio.path + "'");
  }

  Rng rng(mix64(seed_ ^ audio_key(audio) ^
                mix64(static_cast<std::uint64_t>(segment.start_ms()) << 20 ^
                      static_cast<std::uint64_t>(segment.end_ms()))));
  const auto jitter_ms = [&] { return std::llround(rng.uniform(-jitter_s_, jitter_s_) * 1000.0); };
  std::vector<WordTiming> out;
  std::int64_t prev_end = segment.start_ms();
  for (std::size_t k = 0; k < best.size(); ++k) {
    const auto& w = *inside[best[k]];
    std::int64_t s = std::clamp<std::int64_t>(w.span.start_ms() + jitter_ms(), segment.start_ms(), segment.end_ms());
    std::int64_t e = std::clamp<std::int64_t>(w.span.end_ms() + jitter_ms(), segment.start_ms(), segment.end_ms());
    s = std::max(s, prev_end);
    e = std::max(e, s + 1);
    if (e > segment.end_ms()) {
      throw EngineError(EngineFailure::alignment_failure, desc_.name, "no room for word '" + tokens[k] + "'");
    }
    out.push_back({tokens[k], Segment::from_millis(s, e)});
    prev_end = e;
  }
  return out;
}

FailingAligner::FailingAligner(std::string name)
    : desc_{std::move(name), EngineKind::forced_aligner, Transport::in_process_mock} {}

std::vector<WordTiming> FailingAligner::force_align(const AudioRef&, const Segment&, std::string_view) {
  throw EngineError(EngineFailure::alignment_failure, desc_.name, "aligner configured to fail");
}

EnergyVad::EnergyVad(std::string name, double midpoint_rms, double slope)
    : desc_{std::move(name), EngineKind::frame_scorer, Transport::in_process_mock},
      midpoint_(log_energy_for_rms(midpoint_rms)),
      slope_(slope) {
  if (!(midpoint_rms > 0.0) || !(slope > 0.0)) throw ValidationError("energy VAD parameters must be positive");
}

double EnergyVad::mean_log_energy(const MelFeatures& f) {
  if (f.frames == 0) return std::log(MelConfig::kLogFloor);
  double total = 0.0;
  for (std::size_t t = 0; t < f.frames; ++t) {
    const auto frame = f.frame(t);
    const float peak = *std::max_element(frame.begin(), frame.end());
    double acc = 0.0;
    for (float v : frame) acc += std::exp(double(v) - peak);
    total += double(peak) + std::log(acc);
  }
  return total / double(f.frames);
}

double EnergyVad::log_energy_for_rms(double rms) {
  // White noise of variance s^2 gives E|X_k|^2 = s^2 * sum(w^2) per bin,
  // so the summed mel energy is s^2 * sum(w^2) * sum(filter weights).
  static const double gain = [] {
    const MelExtractor mel;
    double filt = 0.0;
    for (float w : mel.filterbank()) filt += w;
    double win = 0.0;
    for (std::size_t i = 0; i < MelConfig::kWindow; ++i) {
      const double w = 0.5 - 0.5 * std::cos(2.0 * M_PI * double(i) / double(MelConfig::kWindow));
      win += w * w;
    }
    return filt * win;
  }();
  return std::log(rms * rms * gain);
}

double EnergyVad::score_frames(const MelFeatures& features, const ChunkContext&) {
  check_shape(desc_, features, input_bins());
  const float floor_log = std::log(MelConfig::kLogFloor);
  if (std::all_of(features.values.begin(), features.values.end(),
                  [&](float v) { return v <= floor_log; })) {
    return 0.0;
  }
  const double x = (mean_log_energy(features) - midpoint_) / slope_;
  return 1.0 / (1.0 + std::exp(-x));
}

// ---------------------------------------------------------------------------

void EngineRegistry::claim(const EngineDescriptor& d) {
  if (d.name.empty()) throw ValidationError("engine name must not be empty");
  if (!names_.emplace(d.name, d).second) throw ValidationError("duplicate engine name '" + d.name + "'");
}

void EngineRegistry::add(std::shared_ptr<Transcriber> e) {
  claim(e->descriptor());
  transcribers_[e->descriptor().name] = std::move(e);
}
void EngineRegistry::add(std::shared_ptr<ForcedAligner> e) {
  claim(e->descriptor());
  aligners_[e->descriptor().name] = std::move(e);
}
void EngineRegistry::add(std::shared_ptr<FrameScorer> e) {
  claim(e->descriptor());
  scorers_[e->descriptor().name] = std::move(e);
}

namespace {
template <typename Map>
auto lookup(const Map& m, const std::string& name, const char* kind) {
  const auto it = m.find(name);
  if (it == m.end()) {
    throw ValidationError(std::string("engine '") + name + "' is not a registered " + kind);
  }
  return it->second;
}
}  // namespace

std::shared_ptr<Transcriber> EngineRegistry::transcriber(const std::string& name) const {
  return lookup(transcribers_, name, "transcriber");
}
std::shared_ptr<ForcedAligner> EngineRegistry::aligner(const std::string& name) const {
  return lookup(aligners_, name, "forced_aligner");
}
std::shared_ptr<FrameScorer> EngineRegistry::scorer(const std::string& name) const {
  return lookup(scorers_, name, "frame_scorer");
}
bool EngineRegistry::contains(const std::string& name) const { return names_.count(name) > 0; }

std::vector<EngineDescriptor> EngineRegistry::descriptors() const {
  std::vector<EngineDescriptor> out;
  for (const auto& [name, d] : names_) out.push_back(d);
  return out;
}

}  // namespace bwc
