#include "bwc/pipeline.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include "bwc/align.hpp"
#include "bwc/detect.hpp"
#include "bwc/errors.hpp"
#include "bwc/eval.hpp"
#include "bwc/filter.hpp"
#include "bwc/parallel.hpp"
#include "bwc/rng.hpp"
#include "bwc/scorer.hpp"
#include "bwc/subprocess.hpp"
#include "bwc/synthgen.hpp"
#include "bwc/tune.hpp"

namespace bwc {

namespace fs = std::filesystem;
using nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

// ---------------------------------------------------------------------------
// Config schema

/// Typed reads from one JSON object; remembers which keys were consumed so
/// leftovers can be reported as unknown.
class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_null() && !j_.is_object()) throw ValidationError(where_ + " must be an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.is_object() && j_.contains(key) && !j_.at(key).is_null();
  }

  template <typename T>
  T get(const std::string& key, T fallback) {
    if (!has(key)) return fallback;
    return as<T>(key);
  }

  template <typename T>
  std::optional<T> opt(const std::string& key) {
    if (!has(key)) return std::nullopt;
    return as<T>(key);
  }

  const json& raw(const std::string& key) {
    static const json null_json;
    return has(key) ? j_.at(key) : null_json;
  }

  std::string where(const std::string& key) const { return where_ + "." + key; }

  void finish() const {
    if (!j_.is_object()) return;
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ValidationError("unknown config key '" + where_ + "." + k + "'");
    }
  }

 private:
  template <typename T>
  T as(const std::string& key) {
    const auto& v = j_.at(key);
    try {
      if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) throw std::invalid_argument("number");
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw std::invalid_argument("boolean");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer() || (std::is_unsigned_v<T> && v.get<long long>() < 0)) {
          throw std::invalid_argument("non-negative integer");
        }
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw std::invalid_argument("string");
      }
      return v.get<T>();
    } catch (const std::invalid_argument& e) {
      throw ValidationError("config key '" + where(key) + "' must be a " + e.what());
    } catch (const json::exception& e) {
      throw ValidationError("config key '" + where(key) + "': " + e.what());
    }
  }

  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

struct EngineSpec {
  std::string name;
  EngineKind kind = EngineKind::transcriber;
  std::string type;
  json params;
};

struct Settings {
  std::optional<std::string> manifest, audio_root, truth;
  std::vector<EngineSpec> engines;
  CorpusSpec synth;
  SplitConfig split;
  std::string align_input = "train";
  std::optional<std::string> mfa_role, w2v2_role;
  std::vector<std::string> align_transcribers;
  double chunk_max_s = 20.0;
  CriterionId criterion = CriterionId::c3;
  std::optional<std::string> vad;
  std::string officer = "reference";
  TrainingChunkConfig chunks;
  TrainConfig train;
  std::optional<DetectorThresholds> fixed_thresholds;
  std::optional<std::string> tune_transcriber;
  TuneSpec tune = TuneSpec::detector_defaults();
  std::optional<std::string> transcriber;
};

const std::map<std::string, std::pair<EngineKind, std::set<std::string>>>& engine_types() {
  static const std::map<std::string, std::pair<EngineKind, std::set<std::string>>> t{
      {"echo", {EngineKind::transcriber, {}}},
      {"degraded", {EngineKind::transcriber, {"inner", "dropout"}}},
      {"uniform", {EngineKind::forced_aligner, {}}},
      {"jitter", {EngineKind::forced_aligner, {"jitter_s"}}},
      {"failing", {EngineKind::forced_aligner, {}}},
      {"energy_vad", {EngineKind::frame_scorer, {"midpoint_rms", "slope"}}},
      {"reference_linear", {EngineKind::frame_scorer, {"weights"}}},
      {"subprocess", {EngineKind::transcriber, {"argv", "timeout_ms"}}},
  };
  return t;
}

Settings read_settings(const json& tree, std::uint64_t seed) {
  Settings s;
  Reader top(tree, "config");
  top.get<std::uint64_t>("seed", 0);
  top.get<std::size_t>("jobs", 1);
  top.opt<std::string>("out_dir");

  {
    Reader r(top.raw("paths"), "paths");
    s.manifest = r.opt<std::string>("manifest");
    s.audio_root = r.opt<std::string>("audio_root");
    s.truth = r.opt<std::string>("truth");
    r.finish();
  }

  const json& engines = top.raw("engines");
  if (!engines.is_null() && !engines.is_array()) throw ValidationError("config key 'engines' must be an array");
  std::set<std::string> names;
  for (std::size_t i = 0; engines.is_array() && i < engines.size(); ++i) {
    Reader r(engines[i], "engines[" + std::to_string(i) + "]");
    EngineSpec e;
    e.name = r.get<std::string>("name", "");
    if (e.name.empty()) throw ValidationError("engines[" + std::to_string(i) + "] needs a name");
    if (!names.insert(e.name).second) throw ValidationError("duplicate engine name '" + e.name + "'");
    e.kind = parse_engine_kind(r.get<std::string>("kind", ""));
    e.type = r.get<std::string>("type", "");
    const auto it = engine_types().find(e.type);
    if (it == engine_types().end()) throw ValidationError("engine '" + e.name + "' has unknown type '" + e.type + "'");
    if (e.type != "subprocess" && it->second.first != e.kind) {
      throw ValidationError("engine '" + e.name + "': type '" + e.type + "' is not a " + std::string(to_string(e.kind)));
    }
    e.params = json::object();
    for (const auto& key : it->second.second) {
      if (r.has(key)) e.params[key] = engines[i].at(key);
    }
    if (e.type == "subprocess" && !e.params.contains("argv")) {
      throw ValidationError("engine '" + e.name + "' needs argv");
    }
    r.finish();
    s.engines.push_back(std::move(e));
  }

  {
    Reader r(top.raw("synth"), "synth");
    auto& c = s.synth;
    c.stops = r.get("stops", c.stops);
    c.duration_s = r.get("duration_s", c.duration_s);
    c.officer_pool = r.get("officer_pool", c.officer_pool);
    c.officer_utterances = r.get("officer_utterances", c.officer_utterances);
    c.community_utterances = r.get("community_utterances", c.community_utterances);
    c.community_gain = r.get("community_gain", c.community_gain);
    c.secondary_utterances = r.get("secondary_utterances", c.secondary_utterances);
    c.secondary_gain = r.get("secondary_gain", c.secondary_gain);
    c.dispatch_utterances = r.get("dispatch_utterances", c.dispatch_utterances);
    c.dispatch_gain = r.get("dispatch_gain", c.dispatch_gain);
    c.noise_floor = r.get("noise_floor", c.noise_floor);
    c.overlap_probability = r.get("overlap_probability", c.overlap_probability);
    c.min_gap_s = r.get("min_gap_s", c.min_gap_s);
    c.max_gap_s = r.get("max_gap_s", c.max_gap_s);
    c.min_words = r.get("min_words", c.min_words);
    c.max_words = r.get("max_words", c.max_words);
    c.seed = seed;
    r.finish();
  }
  {
    Reader r(top.raw("split"), "split");
    auto& c = s.split;
    c.test_stops = r.get("test_stops", c.test_stops);
    c.validation_stops = r.get("validation_stops", c.validation_stops);
    c.max_test_utterances = r.get("max_test_utterances", c.max_test_utterances);
    c.balance_test_race = r.get("balance_test_race", c.balance_test_race);
    c.seed = seed;
    r.finish();
  }
  {
    Reader r(top.raw("align"), "align");
    s.align_input = r.get<std::string>("input", s.align_input);
    if (s.align_input != "train" && s.align_input != "all") {
      throw ValidationError("align.input must be 'train' or 'all'");
    }
    s.mfa_role = r.opt<std::string>("mfa_role");
    s.w2v2_role = r.opt<std::string>("w2v2_role");
    s.align_transcribers = r.get<std::vector<std::string>>("transcribers", {});
    s.chunk_max_s = r.get("chunk_max_s", s.chunk_max_s);
    if (!(s.chunk_max_s > 0)) throw ValidationError("align.chunk_max_s must be positive");
    r.finish();
  }
  {
    Reader r(top.raw("filter"), "filter");
    s.criterion = parse_criterion(r.get<std::string>("criterion", "c3"));
    r.finish();
  }
  {
    Reader r(top.raw("detector"), "detector");
    s.vad = r.opt<std::string>("vad");
    s.officer = r.get<std::string>("officer", s.officer);
    auto& c = s.chunks;
    c.per_class = r.get("per_class", c.per_class);
    c.utterance_min_vad = r.get("utterance_min_vad", c.utterance_min_vad);
    c.negatives.min_vad = r.get("negative_min_vad", c.negatives.min_vad);
    c.negatives.merge_gap_s = r.get("negative_merge_s", c.negatives.merge_gap_s);
    c.augment_probability = r.get("augment_probability", c.augment_probability);
    c.seed = seed;
    s.train.max_epochs = r.get("max_epochs", s.train.max_epochs);
    s.train.learning_rate = r.get("learning_rate", s.train.learning_rate);
    s.train.seed = seed;
    if (r.has("thresholds")) {
      Reader t(r.raw("thresholds"), "detector.thresholds");
      DetectorThresholds th;
      th.t_vad = t.get("t_vad", th.t_vad);
      th.t_officer = t.get("t_officer", th.t_officer);
      th.t_smooth = t.get("t_smooth", th.t_smooth);
      t.finish();
      th.validate();
      s.fixed_thresholds = th;
    }
    r.finish();
  }
  {
    Reader r(top.raw("tune"), "tune");
    s.tune_transcriber = r.opt<std::string>("transcriber");
    s.tune.budget = r.get("budget", s.tune.budget);
    s.tune.init_samples = r.get("init_samples", s.tune.init_samples);
    s.tune.mode = parse_tune_mode(r.get<std::string>("mode", "gp_ei"));
    s.tune.seed = derive_seed(seed, "tuning");
    s.tune.validate();
    r.finish();
  }
  {
    Reader r(top.raw("transcribe"), "transcribe");
    s.transcriber = r.opt<std::string>("transcriber");
    r.finish();
  }
  {
    Reader r(top.raw("evaluate"), "evaluate");
    r.finish();
  }
  top.finish();

  // Every referenced engine must exist and be of the right kind.
  std::map<std::string, EngineKind> kinds;
  for (const auto& e : s.engines) kinds[e.name] = e.kind;
  const auto require = [&](const std::optional<std::string>& name, EngineKind kind, const std::string& key) {
    if (!name) return;
    const auto it = kinds.find(*name);
    if (it == kinds.end()) throw ValidationError(key + " names unknown engine '" + *name + "'");
    if (it->second != kind) {
      throw ValidationError(key + ": engine '" + *name + "' is not a " + std::string(to_string(kind)));
    }
  };
  require(s.mfa_role, EngineKind::forced_aligner, "align.mfa_role");
  require(s.w2v2_role, EngineKind::forced_aligner, "align.w2v2_role");
  for (const auto& t : s.align_transcribers) require(t, EngineKind::transcriber, "align.transcribers");
  require(s.vad, EngineKind::frame_scorer, "detector.vad");
  if (s.officer != "reference") require(s.officer, EngineKind::frame_scorer, "detector.officer");
  require(s.tune_transcriber, EngineKind::transcriber, "tune.transcriber");
  require(s.transcriber, EngineKind::transcriber, "transcribe.transcriber");
  for (const auto& e : s.engines) {
    if (e.type == "degraded") {
      require(e.params.value("inner", std::string()), EngineKind::transcriber, "engine '" + e.name + "'.inner");
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Stage context

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& data) {
  fs::create_directories(p.parent_path());
  const fs::path tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << data;
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  fs::rename(tmp, p);
}


class Context {
 public:
  Context(const PipelineConfig& cfg, std::ostream& log)
      : cfg_(cfg), settings_(read_settings(cfg.tree, cfg.seed)), log_(log) {}

  const Settings& settings() const { return settings_; }
  const PipelineConfig& config() const { return cfg_; }
  std::ostream& log() { return log_; }
  fs::path stage_dir(const std::string& stage) const { return cfg_.out_dir / stage; }

  fs::path resolve(const std::string& p) const {
    const fs::path path(p);
    return path.is_absolute() ? path : cfg_.base_dir / path;
  }

  fs::path manifest_path() const {
    return settings_.manifest ? resolve(*settings_.manifest) : stage_dir("synth") / "manifest.jsonl";
  }
  fs::path audio_root() const {
    return settings_.audio_root ? resolve(*settings_.audio_root) : manifest_path().parent_path();
  }
  fs::path truth_path() const {
    return settings_.truth ? resolve(*settings_.truth) : stage_dir("synth") / "truth.jsonl";
  }

  std::string audio_file(const StopRecord& stop) const {
    const fs::path p(stop.audio_path);
    return (p.is_absolute() ? p : audio_root() / p).lexically_normal().string();
  }

  Audio load_audio(const StopRecord& stop) const { return read_wav(audio_file(stop)); }

  AudioRef audio_ref(const StopRecord& stop, const Audio& audio) const {
    return AudioRef{audio_file(stop), audio.duration_ms()};
  }

  Manifest input_manifest(const fs::path& p) const {
    if (!fs::exists(p)) throw PreconditionError("missing input " + p.string() + " (run the earlier stage first)");
    return load_manifest(p);
  }

  std::shared_ptr<Transcriber> transcriber(const std::optional<std::string>& name, const std::string& key) {
    if (!name) throw ValidationError("config key '" + key + "' is required for this stage");
    return registry().transcriber(*name);
  }
  std::shared_ptr<ForcedAligner> aligner(const std::optional<std::string>& name, const std::string& key) {
    if (!name) throw ValidationError("config key '" + key + "' is required for this stage");
    return registry().aligner(*name);
  }
  std::shared_ptr<FrameScorer> scorer(const std::optional<std::string>& name, const std::string& key) {
    if (!name) throw ValidationError("config key '" + key + "' is required for this stage");
    return registry().scorer(*name);
  }

  std::shared_ptr<FrameScorer> officer_scorer() {
    if (settings_.officer != "reference") return registry().scorer(settings_.officer);
    const auto path = stage_dir("detector") / "scorer.json";
    if (!fs::exists(path)) throw PreconditionError("missing " + path.string() + " (run train-detector first)");
    return std::make_shared<LinearChunkScorer>(LinearChunkScorer::load(path));
  }

  const MelExtractor& mel() {
    if (!mel_) mel_ = std::make_unique<MelExtractor>();
    return *mel_;
  }

  void write_meta(const std::string& stage, const std::vector<fs::path>& inputs) {
    ojson meta;
    meta["stage"] = stage;
    meta["config_hash"] = cfg_.hash();
    meta["seed"] = cfg_.seed;
    ojson in = ojson::object();
    for (const auto& p : inputs) {
      if (fs::exists(p)) in[p.filename().string()] = hex64(fnv1a64(read_file(p)));
    }
    meta["inputs"] = in;
    write_file(stage_dir(stage) / "meta.json", meta.dump(2) + "\n");
  }

 private:
  EngineRegistry& registry() {
    if (!registry_) build_registry();
    return *registry_;
  }

  std::shared_ptr<const WordTruth> truth() {
    if (truth_) return truth_;
    const auto path = truth_path();
    if (!fs::exists(path)) throw PreconditionError("mock engines need word truth at " + path.string());
    const auto raw = WordTruth::load(path);
    auto keyed = std::make_shared<WordTruth>();
    for (const auto& [audio, words] : raw.all()) {
      StopRecord probe;
      probe.audio_path = audio;
      keyed->add(audio_file(probe), words);
    }
    truth_ = keyed;
    return truth_;
  }

  void build_registry() {
    registry_ = std::make_unique<EngineRegistry>();
    std::map<std::string, std::shared_ptr<Transcriber>> transcribers;
    // Degraded engines wrap others, so build plain transcribers first.
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& e : settings_.engines) {
        const bool wrapper = e.type == "degraded";
        if ((pass == 0) == wrapper) continue;
        const auto seed = derive_seed(cfg_.seed, "engine:" + e.name);
        const auto& p = e.params;
        if (e.type == "subprocess") {
          SubprocessOptions opt;
          opt.argv = p.at("argv").get<std::vector<std::string>>();
          if (opt.argv.empty()) throw ValidationError("engine '" + e.name + "' has an empty argv");
          opt.timeout = std::chrono::milliseconds(p.value("timeout_ms", 120000));
          opt.pool_size = cfg_.jobs;
          switch (e.kind) {
            case EngineKind::transcriber: {
              auto t = std::make_shared<SubprocessTranscriber>(e.name, opt);
              transcribers[e.name] = t;
              registry_->add(std::shared_ptr<Transcriber>(t));
              break;
            }
            case EngineKind::forced_aligner:
              registry_->add(std::shared_ptr<ForcedAligner>(std::make_shared<SubprocessAligner>(e.name, opt)));
              break;
            case EngineKind::frame_scorer:
              registry_->add(std::shared_ptr<FrameScorer>(std::make_shared<SubprocessScorer>(e.name, opt)));
              break;
          }
        } else if (e.type == "echo") {
          auto t = std::make_shared<EchoTranscriber>(e.name, truth());
          transcribers[e.name] = t;
          registry_->add(std::shared_ptr<Transcriber>(t));
        } else if (e.type == "degraded") {
          const auto inner = p.at("inner").get<std::string>();
          const auto it = transcribers.find(inner);
          if (it == transcribers.end()) {
            throw ValidationError("engine '" + e.name + "' wraps '" + inner + "', which is not a plain transcriber");
          }
          registry_->add(std::shared_ptr<Transcriber>(
              std::make_shared<DegradedTranscriber>(e.name, it->second, p.value("dropout", 0.1), seed)));
        } else if (e.type == "uniform") {
          registry_->add(std::shared_ptr<ForcedAligner>(std::make_shared<UniformAligner>(e.name)));
        } else if (e.type == "jitter") {
          registry_->add(std::shared_ptr<ForcedAligner>(
              std::make_shared<JitterAligner>(e.name, truth(), p.value("jitter_s", 0.02), seed)));
        } else if (e.type == "failing") {
          registry_->add(std::shared_ptr<ForcedAligner>(std::make_shared<FailingAligner>(e.name)));
        } else if (e.type == "energy_vad") {
          registry_->add(std::shared_ptr<FrameScorer>(std::make_shared<EnergyVad>(
              e.name, p.value("midpoint_rms", EnergyVad::kDefaultMidpointRms), p.value("slope", EnergyVad::kDefaultSlope))));
        } else if (e.type == "reference_linear") {
          if (!p.contains("weights")) throw ValidationError("engine '" + e.name + "' needs weights");
          registry_->add(std::shared_ptr<FrameScorer>(std::make_shared<LinearChunkScorer>(
              LinearChunkScorer::load(resolve(p.at("weights").get<std::string>()), e.name))));
        }
      }
    }
  }

  const PipelineConfig& cfg_;
  Settings settings_;
  std::ostream& log_;
  std::unique_ptr<EngineRegistry> registry_;
  std::shared_ptr<const WordTruth> truth_;
  std::unique_ptr<MelExtractor> mel_;
};

ojson edit_counts_json(const EditCounts& c) {
  return {{"substitutions", c.substitutions},
          {"deletions", c.deletions},
          {"insertions", c.insertions},
          {"reference_words", c.reference_length}};
}

std::string jsonl(const std::vector<ojson>& lines) {
  std::string out;
  for (const auto& l : lines) out += l.dump() + "\n";
  return out;
}

std::vector<json> read_jsonl(const fs::path& p) {
  std::vector<json> out;
  std::istringstream in(read_file(p));
  std::string line;
  long n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw ParseError(p.string() + ":" + std::to_string(n) + ": " + e.what(), n);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Stages

void stage_synth(Context& ctx) {
  const auto dir = ctx.stage_dir("synth");
  const auto corpus = generate_corpus(ctx.settings().synth, dir, ctx.config().jobs);
  ctx.write_meta("synth", {});
  ctx.log() << "synth: " << corpus.manifest.stops.size() << " stops, " << corpus.manifest.utterance_count()
            << " utterances -> " << dir.string() << "\n";
}

void stage_split(Context& ctx) {
  const auto in = ctx.manifest_path();
  const auto manifest = ctx.input_manifest(in);
  const auto split = partition_splits(manifest, ctx.settings().split);
  const auto dir = ctx.stage_dir("split");
  fs::create_directories(dir);
  save_manifest(split.train, dir / "train.jsonl");
  save_manifest(split.validation, dir / "validation.jsonl");
  save_manifest(split.test, dir / "test.jsonl");
  save_manifest(split.withheld, dir / "withheld.jsonl");
  ojson report;
  for (const auto& [name, m] : std::vector<std::pair<std::string, const Manifest*>>{
           {"train", &split.train}, {"validation", &split.validation}, {"test", &split.test}, {"withheld", &split.withheld}}) {
    report[name] = {{"stops", m->stops.size()}, {"utterances", m->utterance_count()}};
  }
  write_file(dir / "report.json", report.dump(2) + "\n");
  ctx.write_meta("split", {in});
  ctx.log() << "split: train " << split.train.stops.size() << ", validation " << split.validation.stops.size()
            << ", test " << split.test.stops.size() << ", withheld " << split.withheld.stops.size() << "\n";
}

void stage_align(Context& ctx) {
  const auto& s = ctx.settings();
  const auto in = s.align_input == "all" ? ctx.manifest_path() : ctx.stage_dir("split") / "train.jsonl";
  const auto manifest = ctx.input_manifest(in);
  auto mfa = ctx.aligner(s.mfa_role, "align.mfa_role");
  auto w2v2 = ctx.aligner(s.w2v2_role, "align.w2v2_role");
  if (s.align_transcribers.empty()) throw ValidationError("config key 'align.transcribers' must name at least one engine");
  std::vector<std::shared_ptr<Transcriber>> owned;
  std::vector<Transcriber*> transcribers;
  for (const auto& name : s.align_transcribers) {
    owned.push_back(ctx.transcriber(name, "align.transcribers"));
    transcribers.push_back(owned.back().get());
  }

  std::vector<StopAlignment> results(manifest.stops.size());
  parallel_for(manifest.stops.size(), ctx.config().jobs, [&](std::size_t i) {
    const auto& stop = manifest.stops[i];
    const auto audio = ctx.load_audio(stop);
    results[i] = align_stop(stop, ctx.audio_ref(stop, audio), *mfa, *w2v2, transcribers, s.chunk_max_s);
  });

  Manifest aligned;
  std::vector<ojson> scores;
  std::vector<AlignedUtterance> all;
  ojson failures = ojson::array();
  std::size_t unalignable = 0, skipped = 0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    aligned.stops.push_back(r.aligned);
    for (const auto& u : r.utterances) {
      ojson engines = ojson::object();
      for (const auto& [name, w] : u.chosen.per_engine_wer) {
        engines[name] = {{"wer", w}, {"no_subs", u.chosen.per_engine_no_subs.at(name)}};
      }
      scores.push_back({{"stop_id", r.aligned.stop_id},
                        {"utt_id", u.utterance_id},
                        {"method", to_string(u.chosen.method)},
                        {"start_s", u.chosen.segment.start()},
                        {"end_s", u.chosen.segment.end()},
                        {"min_wer", u.chosen.min_wer},
                        {"min_no_subs", u.chosen.min_no_subs},
                        {"engines", engines}});
      all.push_back(u);
    }
    for (const auto& f : r.failures) {
      failures.push_back({{"stop_id", r.aligned.stop_id},
                          {"utt_id", f.utterance_id},
                          {"method", to_string(f.method)},
                          {"message", f.message}});
    }
    unalignable += r.unalignable.size();
    skipped += r.skipped.size();
  }
  const auto dir = ctx.stage_dir("align");
  fs::create_directories(dir);
  save_manifest(aligned, dir / "aligned.jsonl");
  write_file(dir / "scores.jsonl", jsonl(scores));

  ojson methods = ojson::array();
  for (const auto& m : summarize_methods(all)) {
    methods.push_back({{"method", to_string(m.method)},
                       {"engine_wer", m.engine_wer},
                       {"candidates", m.candidates},
                       {"chosen", m.chosen},
                       {"chosen_fraction", m.chosen_fraction}});
  }
  ojson report;
  report["utterances"] = manifest.utterance_count();
  report["aligned"] = all.size();
  report["unalignable"] = unalignable;
  report["skipped_no_marks"] = skipped;
  report["methods"] = methods;
  report["failures"] = failures;
  write_file(dir / "report.json", report.dump(2) + "\n");
  ctx.write_meta("align", {in});
  ctx.log() << "align: " << all.size() << " aligned, " << unalignable << " unalignable, " << skipped
            << " without marks\n";
}

void stage_filter(Context& ctx) {
  const auto dir_in = ctx.stage_dir("align");
  const auto aligned = ctx.input_manifest(dir_in / "aligned.jsonl");
  ScoreTable table;
  for (const auto& j : read_jsonl(dir_in / "scores.jsonl")) {
    table[{j.at("stop_id").get<std::string>(), j.at("utt_id").get<std::string>()}] =
        UtteranceScores{j.at("min_wer").get<double>(), j.at("min_no_subs").get<double>()};
  }
  const auto criterion = make_criterion(ctx.settings().criterion);
  const auto result = filter_manifest(aligned, table, criterion);
  const auto dir = ctx.stage_dir("filter");
  fs::create_directories(dir);
  save_manifest(result.kept, dir / "kept.jsonl");
  save_manifest(result.dropped, dir / "dropped.jsonl");
  ojson stats;
  stats["applied"] = to_string(result.stats.applied);
  stats["input_utterances"] = result.stats.input_utterances;
  ojson per = ojson::object();
  for (std::size_t k = 0; k < 4; ++k) {
    per[std::string(to_string(static_cast<CriterionId>(k)))] = {{"kept", result.stats.kept[k]},
                                                                 {"kept_hours", result.stats.kept_hours[k]}};
  }
  stats["criteria"] = per;
  write_file(dir / "stats.json", stats.dump(2) + "\n");
  ctx.write_meta("filter", {dir_in / "aligned.jsonl", dir_in / "scores.jsonl"});
  const auto k = static_cast<std::size_t>(result.stats.applied);
  ctx.log() << "filter: " << to_string(result.stats.applied) << " kept " << result.stats.kept[k] << " of "
            << result.stats.input_utterances << "\n";
}

void stage_train_detector(Context& ctx) {
  const auto& s = ctx.settings();
  const auto in = ctx.stage_dir("filter") / "kept.jsonl";
  const auto manifest = ctx.input_manifest(in);
  auto vad = ctx.scorer(s.vad, "detector.vad");
  auto cfg = s.chunks;
  cfg.jobs = ctx.config().jobs;
  TrainingChunkStats stats;
  const auto& mel = ctx.mel();
  const auto chunks = build_training_chunks(
      manifest, [&](const StopRecord& stop) { return ctx.load_audio(stop); }, mel, *vad, cfg, &stats);

  std::vector<std::vector<std::size_t>> by_stop(manifest.stops.size());
  for (std::size_t i = 0; i < chunks.size(); ++i) by_stop[chunks[i].stop_index].push_back(i);
  std::vector<std::vector<float>> pooled(chunks.size());
  parallel_for(manifest.stops.size(), ctx.config().jobs, [&](std::size_t si) {
    if (by_stop[si].empty()) return;
    const auto audio = ctx.load_audio(manifest.stops[si]);
    for (auto i : by_stop[si]) pooled[i] = pool_mean_std(mel.compute(chunk_samples(audio, chunks[i])));
  });
  std::vector<int> labels;
  std::size_t officer = 0;
  for (const auto& c : chunks) {
    labels.push_back(c.label == ChunkLabel::officer ? 1 : 0);
    officer += static_cast<std::size_t>(labels.back());
  }
  TrainReport tr;
  const auto scorer = train_chunk_scorer(pooled, labels, s.train, &tr);
  const auto dir = ctx.stage_dir("detector");
  fs::create_directories(dir);
  write_file(dir / "scorer.json", scorer.to_json());
  ojson report;
  report["officer_chunks"] = officer;
  report["not_officer_chunks"] = chunks.size() - officer;
  report["officer_available"] = stats.officer_available;
  report["not_officer_available"] = stats.not_officer_available;
  report["negative_segments"] = stats.negative_segments;
  report["utterances_dropped_vad"] = stats.utterances_dropped_vad;
  report["augmented_chunks"] = stats.augmented;
  report["epochs"] = tr.epochs;
  report["final_loss"] = tr.final_loss;
  report["training_accuracy"] = tr.training_accuracy;
  write_file(dir / "report.json", report.dump(2) + "\n");
  ctx.write_meta("detector", {in});
  ctx.log() << "train-detector: " << chunks.size() << " chunks, training accuracy " << tr.training_accuracy << "\n";
}

std::vector<ValidationStop> score_stops(Context& ctx, const Manifest& m, FrameScorer& vad, FrameScorer& officer) {
  std::vector<ValidationStop> out(m.stops.size());
  const auto& mel = ctx.mel();
  parallel_for(m.stops.size(), ctx.config().jobs, [&](std::size_t i) {
    const auto audio = ctx.load_audio(m.stops[i]);
    out[i].stop = &m.stops[i];
    out[i].audio = ctx.audio_ref(m.stops[i], audio);
    out[i].scores = score_stream(audio, mel, vad, &officer, out[i].audio.path);
  });
  return out;
}

void stage_tune(Context& ctx) {
  const auto& s = ctx.settings();
  const auto in = ctx.stage_dir("split") / "validation.jsonl";
  const auto manifest = ctx.input_manifest(in);
  auto vad = ctx.scorer(s.vad, "detector.vad");
  auto officer = ctx.officer_scorer();
  auto transcriber = ctx.transcriber(s.tune_transcriber, "tune.transcriber");
  const auto stops = score_stops(ctx, manifest, *vad, *officer);
  const auto tuned = tune_detector(stops, *transcriber, s.tune);
  const auto dir = ctx.stage_dir("tune");
  fs::create_directories(dir);
  ojson th;
  th["t_vad"] = tuned.thresholds.t_vad;
  th["t_officer"] = tuned.thresholds.t_officer;
  th["t_smooth"] = tuned.thresholds.t_smooth;
  th["validation_wer"] = tuned.cost;
  th["mode"] = to_string(s.tune.mode);
  write_file(dir / "thresholds.json", th.dump(2) + "\n");
  std::vector<ojson> trace;
  for (const auto& t : tuned.result.trace) trace.push_back({{"point", t.point}, {"cost", t.cost}, {"iteration", t.iteration}});
  write_file(dir / "trace.jsonl", jsonl(trace));
  ctx.write_meta("tune", {in, ctx.stage_dir("detector") / "scorer.json"});
  ctx.log() << "tune: t_vad " << tuned.thresholds.t_vad << ", t_officer " << tuned.thresholds.t_officer
            << ", t_smooth " << tuned.thresholds.t_smooth << ", validation WER " << tuned.cost << "\n";
}

DetectorThresholds thresholds_for_detect(Context& ctx) {
  const auto path = ctx.stage_dir("tune") / "thresholds.json";
  if (fs::exists(path)) {
    const auto j = json::parse(read_file(path));
    DetectorThresholds th{j.at("t_vad").get<double>(), j.at("t_officer").get<double>(), j.at("t_smooth").get<double>()};
    th.validate();
    return th;
  }
  if (ctx.settings().fixed_thresholds) return *ctx.settings().fixed_thresholds;
  throw PreconditionError("no thresholds: run tune or set detector.thresholds");
}

void stage_detect(Context& ctx) {
  const auto& s = ctx.settings();
  const auto in = ctx.stage_dir("split") / "test.jsonl";
  const auto manifest = ctx.input_manifest(in);
  auto vad = ctx.scorer(s.vad, "detector.vad");
  auto officer = ctx.officer_scorer();
  const auto th = thresholds_for_detect(ctx);
  const auto stops = score_stops(ctx, manifest, *vad, *officer);
  std::vector<ojson> lines;
  std::size_t total = 0;
  for (const auto& vs : stops) {
    for (const auto& d : gate_and_merge(vs.scores, th)) {
      lines.push_back({{"stop_id", vs.stop->stop_id},
                       {"start_s", d.segment.start()},
                       {"end_s", d.segment.end()},
                       {"vad", d.vad},
                       {"officer", d.officer}});
      ++total;
    }
  }
  const auto dir = ctx.stage_dir("detect");
  fs::create_directories(dir);
  write_file(dir / "detected.jsonl", jsonl(lines));
  ctx.write_meta("detect", {in, ctx.stage_dir("tune") / "thresholds.json", ctx.stage_dir("detector") / "scorer.json"});
  ctx.log() << "detect: " << total << " segments over " << stops.size() << " stops\n";
}

void stage_transcribe(Context& ctx) {
  const auto& s = ctx.settings();
  const auto in = ctx.stage_dir("split") / "test.jsonl";
  const auto manifest = ctx.input_manifest(in);
  auto transcriber = ctx.transcriber(s.transcriber, "transcribe.transcriber");
  const auto detected_path = ctx.stage_dir("detect") / "detected.jsonl";
  std::map<std::string, std::vector<Segment>> detected;
  const bool have_detected = fs::exists(detected_path);
  if (have_detected) {
    for (const auto& j : read_jsonl(detected_path)) {
      detected[j.at("stop_id").get<std::string>()].push_back(
          Segment::from_seconds(j.at("start_s").get<double>(), j.at("end_s").get<double>()));
    }
  }
  std::vector<std::vector<ojson>> utt_lines(manifest.stops.size()), det_lines(manifest.stops.size());
  parallel_for(manifest.stops.size(), ctx.config().jobs, [&](std::size_t i) {
    const auto& stop = manifest.stops[i];
    const auto audio = ctx.load_audio(stop);
    const auto ref = ctx.audio_ref(stop, audio);
    const auto run = [&](const Segment& seg, ojson line) {
      std::string text;
      bool ok = true;
      try {
        text = transcriber->transcribe(ref, seg);
      } catch (const Error&) {
        ok = false;
      }
      line["start_s"] = seg.start();
      line["end_s"] = seg.end();
      line["text"] = text;
      line["ok"] = ok;
      return line;
    };
    for (const auto& u : stop.utterances) {
      if (!u.segment) continue;
      utt_lines[i].push_back(run(*u.segment, {{"stop_id", stop.stop_id}, {"utt_id", u.id}}));
    }
    const auto it = detected.find(stop.stop_id);
    if (it == detected.end()) return;
    for (const auto& seg : it->second) det_lines[i].push_back(run(seg, {{"stop_id", stop.stop_id}}));
  });
  std::vector<ojson> utt, det;
  for (auto& v : utt_lines) utt.insert(utt.end(), v.begin(), v.end());
  for (auto& v : det_lines) det.insert(det.end(), v.begin(), v.end());
  const auto dir = ctx.stage_dir("transcribe");
  fs::create_directories(dir);
  write_file(dir / "hypotheses.jsonl", jsonl(utt));
  if (have_detected) {
    write_file(dir / "detected_hypotheses.jsonl", jsonl(det));
  } else {
    fs::remove(dir / "detected_hypotheses.jsonl");
  }
  ctx.write_meta("transcribe", {in, detected_path});
  ctx.log() << "transcribe: " << utt.size() << " utterance segments, " << det.size() << " detected segments\n";
}

std::pair<Race, Gender> speaker_demographics(const StopRecord& stop, SpeakerRole role) {
  switch (role) {
    case SpeakerRole::primary_officer:
    case SpeakerRole::secondary_officer: return {stop.officer_race, stop.officer_gender};
    case SpeakerRole::community_member: return {stop.driver_race, stop.driver_gender};
    default: return {Race::unknown, Gender::unknown};
  }
}

ojson subgroup_json(const std::vector<GroupStat>& table) {
  ojson out = ojson::array();
  for (const auto& g : table) out.push_back({{"group", g.key}, {"count", g.count}, {"mean_wer", g.mean_wer}});
  return out;
}

void stage_evaluate(Context& ctx) {
  const auto in = ctx.stage_dir("split") / "test.jsonl";
  const auto manifest = ctx.input_manifest(in);
  const auto tdir = ctx.stage_dir("transcribe");
  if (!fs::exists(tdir / "hypotheses.jsonl")) throw PreconditionError("missing hypotheses (run transcribe first)");
  std::map<std::pair<std::string, std::string>, std::string> hyps;
  for (const auto& j : read_jsonl(tdir / "hypotheses.jsonl")) {
    hyps[{j.at("stop_id").get<std::string>(), j.at("utt_id").get<std::string>()}] = j.at("text").get<std::string>();
  }

  std::vector<EvalRow> rows;
  EditCounts words, chars;
  std::size_t degenerate = 0, missing = 0;
  for (const auto& stop : manifest.stops) {
    for (const auto& u : stop.utterances) {
      if (!u.segment) continue;
      const auto it = hyps.find({stop.stop_id, u.id});
      if (it == hyps.end()) {
        ++missing;
        continue;
      }
      const auto w = wer(u.raw_text, it->second);
      if (w.degenerate || w.counts.reference_length == 0) {
        ++degenerate;
        continue;
      }
      words += w.counts;
      chars += cer(u.raw_text, it->second).counts;
      const auto [race, gender] = speaker_demographics(stop, u.speaker_role);
      rows.push_back({stop.stop_id, u.id, w.value, u.speaker_role, race, gender});
    }
  }

  ojson report;
  report["overall"] = {{"wer", score_from_counts(words).value},
                       {"cer", score_from_counts(chars).value},
                       {"utterances", rows.size()},
                       {"word_counts", edit_counts_json(words)},
                       {"excluded_empty_reference", degenerate},
                       {"missing_hypotheses", missing}};

  std::string text = "Overall WER " + std::to_string(100.0 * score_from_counts(words).value) + "% over " +
                     std::to_string(rows.size()) + " utterances\n\n";
  const std::vector<std::pair<std::string, std::vector<GroupField>>> groupings{
      {"role", {GroupField::role}},
      {"race", {GroupField::race}},
      {"gender", {GroupField::gender}},
      {"role_race", {GroupField::role, GroupField::race}}};
  ojson groups;
  for (const auto& [name, fields] : groupings) {
    const auto table = subgroup_table(rows, fields);
    groups[name] = subgroup_json(table);
    text += format_subgroup_table(table, fields) + "\n";
  }
  report["subgroups"] = groups;

  try {
    const auto reg = fit_mixed_effects(rows);
    report["regression"] = ojson::parse(regression_json(reg));
    text += format_regression_table(reg);
  } catch (const PreconditionError& e) {
    report["regression"] = {{"error", e.what()}};
    text += std::string("Mixed effects regression not fitted: ") + e.what() + "\n";
  }

  const auto det_path = tdir / "detected_hypotheses.jsonl";
  if (fs::exists(det_path)) {
    std::map<std::string, std::vector<TimedText>> det;
    for (const auto& j : read_jsonl(det_path)) {
      det[j.at("stop_id").get<std::string>()].emplace_back(
          Segment::from_seconds(j.at("start_s").get<double>(), j.at("end_s").get<double>()),
          j.at("text").get<std::string>());
    }
    EditCounts pooled;
    std::vector<SegmentF1> f1s;
    for (const auto& stop : manifest.stops) {
      const auto refs = officer_references(stop);
      auto& h = det[stop.stop_id];
      std::stable_sort(h.begin(), h.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
      pooled += concat_wer(refs, h).counts;
      std::vector<Segment> d, t;
      for (const auto& x : h) d.push_back(x.first);
      for (const auto& x : refs) t.push_back(x.first);
      f1s.push_back(segment_f1(d, t));
    }
    const auto dw = detection_wer_from_counts(pooled);
    const auto f1 = pool_f1(f1s);
    report["detection"] = {{"wer", dw.score.value},
                           {"substitution_pct", dw.substitution_pct},
                           {"deletion_pct", dw.deletion_pct},
                           {"insertion_pct", dw.insertion_pct},
                           {"segment_precision", f1.precision},
                           {"segment_recall", f1.recall},
                           {"segment_f1", f1.f1}};
    char buf[256];
    std::snprintf(buf, sizeof buf, "\nDetected officer speech: WER %.2f%% (S %.2f D %.2f I %.2f), segment F1 %.3f\n",
                  100.0 * dw.score.value, dw.substitution_pct, dw.deletion_pct, dw.insertion_pct, f1.f1);
    text += buf;
  }

  const auto dir = ctx.stage_dir("evaluate");
  fs::create_directories(dir);
  save_eval_rows_jsonl(rows, dir / "rows.jsonl");
  write_file(dir / "report.json", report.dump(2) + "\n");
  write_file(dir / "report.txt", text);
  ctx.write_meta("evaluate", {in, tdir / "hypotheses.jsonl", det_path});
  ctx.log() << "evaluate: WER " << score_from_counts(words).value << " over " << rows.size() << " utterances\n";
}

using StageFn = void (*)(Context&);

const std::vector<std::pair<std::string, StageFn>>& stage_table() {
  static const std::vector<std::pair<std::string, StageFn>> t{
      {"synth", stage_synth},         {"split", stage_split},   {"align", stage_align},
      {"filter", stage_filter},       {"train-detector", stage_train_detector},
      {"tune", stage_tune},           {"detect", stage_detect}, {"transcribe", stage_transcribe},
      {"evaluate", stage_evaluate}};
  return t;
}

}  // namespace

std::string PipelineConfig::hash() const {
  json canonical = tree;
  canonical.erase("jobs");
  canonical.erase("out_dir");
  return hex64(fnv1a64(canonical.dump()));
}

PipelineConfig parse_config(const json& tree, const fs::path& base_dir, const ConfigOverrides& overrides) {
  if (!tree.is_object()) throw ValidationError("config must be a JSON object");
  PipelineConfig cfg;
  cfg.tree = tree;
  if (overrides.jobs) cfg.tree["jobs"] = *overrides.jobs;
  if (overrides.seed) cfg.tree["seed"] = *overrides.seed;
  if (overrides.criterion) cfg.tree["filter"]["criterion"] = *overrides.criterion;
  if (overrides.out_dir) cfg.tree["out_dir"] = overrides.out_dir->string();
  cfg.base_dir = base_dir;
  Reader top(cfg.tree, "config");
  cfg.seed = top.get<std::uint64_t>("seed", 0);
  cfg.jobs = top.get<std::size_t>("jobs", 1);
  if (cfg.jobs == 0) throw ValidationError("jobs must be at least 1");
  const auto out = top.get<std::string>("out_dir", "out");
  cfg.out_dir = fs::path(out).is_absolute() ? fs::path(out) : base_dir / out;
  read_settings(cfg.tree, cfg.seed);
  return cfg;
}

PipelineConfig load_config(const fs::path& path, const ConfigOverrides& overrides) {
  json tree;
  try {
    tree = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what(), 0);
  }
  // Flag values are relative to the working directory, config values to
  // the config file.
  auto ov = overrides;
  if (ov.out_dir && ov.out_dir->is_relative()) ov.out_dir = fs::absolute(*ov.out_dir);
  return parse_config(tree, fs::absolute(path).parent_path(), ov);
}

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& [name, fn] : stage_table()) n.push_back(name);
    n.push_back("all");
    return n;
  }();
  return names;
}

void run_stage(const std::string& name, const PipelineConfig& config, std::ostream& log) {
  Context ctx(config, log);
  if (name == "all") {
    for (const auto& [stage, fn] : stage_table()) {
      if (stage == "synth" && !config.tree.contains("synth")) continue;
      fn(ctx);
    }
    return;
  }
  for (const auto& [stage, fn] : stage_table()) {
    if (stage == name) {
      fn(ctx);
      return;
    }
  }
  throw ValidationError("unknown subcommand '" + name + "'");
}

int run_subcommand(const std::string& name, const PipelineConfig& config, std::ostream& log, std::ostream& err) {
  try {
    run_stage(name, config, log);
    return 0;
  } catch (const Error& e) {
    err << json{{"error", {{"kind", e.kind()}, {"message", e.what()}, {"subcommand", name}}}}.dump() << "\n";
  } catch (const std::exception& e) {
    err << json{{"error", {{"kind", "internal"}, {"message", e.what()}, {"subcommand", name}}}}.dump() << "\n";
  }
  return 1;
}

}  // namespace bwc
