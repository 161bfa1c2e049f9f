#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "bwc/errors.hpp"
#include "bwc/pipeline.hpp"
#include "test_helpers.hpp"

using namespace bwc;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json small_config() {
  return json::parse(R"({
    "seed": 3,
    "synth": {"stops": 8, "officer_pool": 8, "duration_s": 30, "officer_utterances": 3, "community_utterances": 3,
              "noise_floor": 0.002, "min_gap_s": 0.4, "max_gap_s": 1.0},
    "engines": [
      {"name": "asr", "kind": "transcriber", "type": "echo"},
      {"name": "asr-noisy", "kind": "transcriber", "type": "degraded", "inner": "asr", "dropout": 0.2},
      {"name": "mfa", "kind": "forced_aligner", "type": "jitter", "jitter_s": 0.02},
      {"name": "w2v2", "kind": "forced_aligner", "type": "uniform"},
      {"name": "vad", "kind": "frame_scorer", "type": "energy_vad"}
    ],
    "split": {"test_stops": 2, "validation_stops": 2},
    "align": {"mfa_role": "mfa", "w2v2_role": "w2v2", "transcribers": ["asr", "asr-noisy"]},
    "filter": {"criterion": "c2"},
    "detector": {"vad": "vad", "per_class": 3000, "max_epochs": 100},
    "tune": {"transcriber": "asr", "budget": 6, "init_samples": 3},
    "transcribe": {"transcriber": "asr"}
  })");
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

std::string validation_message(const json& tree) {
  try {
    parse_config(tree, fs::temp_directory_path());
  } catch (const ValidationError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("config schema is strict") {
  auto c = small_config();
  CHECK(validation_message(c).empty());
  c["tune"]["budgett"] = 3;
  CHECK(validation_message(c).find("tune.budgett") != std::string::npos);
  c = small_config();
  c["align"]["mfa_role"] = "nope";
  CHECK(validation_message(c).find("unknown engine 'nope'") != std::string::npos);
  c = small_config();
  c["align"]["mfa_role"] = "asr";
  CHECK(validation_message(c).find("not a forced_aligner") != std::string::npos);
  c = small_config();
  c["engines"][0]["type"] = "uniform";
  CHECK_FALSE(validation_message(c).empty());
  c = small_config();
  c["split"]["test_stops"] = -2;
  CHECK(validation_message(c).find("split.test_stops") != std::string::npos);
  c = small_config();
  c["engines"].push_back({{"name", "sub"}, {"kind", "transcriber"}, {"type", "subprocess"}});
  CHECK(validation_message(c).find("argv") != std::string::npos);
  c = small_config();
  c["detector"]["thresholds"] = {{"t_vad", 0.5}, {"t_officer", 0.5}, {"t_smooth", 9.0}};
  CHECK_FALSE(validation_message(c).empty());
}

TEST_CASE("overrides and hashing") {
  ConfigOverrides ov;
  ov.jobs = 4;
  ov.seed = 99;
  ov.criterion = "c4";
  const auto base = parse_config(small_config(), "/tmp/x");
  const auto cfg = parse_config(small_config(), "/tmp/x", ov);
  CHECK(cfg.jobs == 4);
  CHECK(cfg.seed == 99);
  CHECK(cfg.tree["filter"]["criterion"] == "c4");
  CHECK(cfg.out_dir == fs::path("/tmp/x/out"));
  ConfigOverrides jobs_only;
  jobs_only.jobs = 8;
  CHECK(parse_config(small_config(), "/tmp/x", jobs_only).hash() == base.hash());
  CHECK(cfg.hash() != base.hash());
  CHECK(subcommands().back() == "all");
}

TEST_CASE("stage errors are reported as JSON") {
  const auto dir = testing::temp_dir("pipe-err");
  auto cfg = parse_config(small_config(), dir);
  std::ostringstream log, err;
  CHECK(run_subcommand("split", cfg, log, err) == 1);
  const auto j = json::parse(err.str());
  CHECK(j["error"]["kind"] == "precondition");
  CHECK(j["error"]["subcommand"] == "split");
  std::ostringstream err2;
  CHECK(run_subcommand("bogus", cfg, log, err2) == 1);
  CHECK(json::parse(err2.str())["error"]["kind"] == "validation");
  fs::remove_all(dir);
}

TEST_CASE("full pipeline on a small synthetic corpus") {
  const auto dir = testing::temp_dir("pipe-run");
  const auto cfg = parse_config(small_config(), dir);
  std::ostringstream log, err;
  const int rc = run_subcommand("all", cfg, log, err);
  INFO(err.str());
  INFO(log.str());
  REQUIRE(rc == 0);
  const auto out = dir / "out";
  for (const char* f : {"synth/manifest.jsonl", "split/train.jsonl", "split/test.jsonl", "align/aligned.jsonl",
                        "align/scores.jsonl", "filter/kept.jsonl", "filter/stats.json", "detector/scorer.json",
                        "tune/thresholds.json", "tune/trace.jsonl", "detect/detected.jsonl",
                        "transcribe/hypotheses.jsonl", "evaluate/report.json", "evaluate/report.txt"}) {
    CHECK_MESSAGE(fs::exists(out / f), f);
  }
  const auto meta = json::parse(slurp(out / "filter/meta.json"));
  CHECK(meta["config_hash"] == cfg.hash());
  CHECK(meta["inputs"].contains("aligned.jsonl"));
  const auto report = json::parse(slurp(out / "evaluate/report.json"));
  CHECK(report["overall"]["wer"] == 0.0);
  CHECK(report.contains("detection"));
  const auto trace = slurp(out / "tune/trace.jsonl");
  CHECK(std::count(trace.begin(), trace.end(), '\n') == 6);

  // Re-running a stage reproduces its artifacts byte for byte.
  const auto before = slurp(out / "align/aligned.jsonl");
  std::ostringstream log2, err2;
  REQUIRE(run_subcommand("align", cfg, log2, err2) == 0);
  CHECK(slurp(out / "align/aligned.jsonl") == before);
  fs::remove_all(dir);
}

TEST_CASE("CLI exit codes and error JSON") {
  const auto dir = testing::temp_dir("pipe-cli");
  auto c = small_config();
  c["tune"]["transcriber"] = "missing-engine";
  {
    std::ofstream out(dir / "bad.json");
    out << c.dump();
  }
  const std::string cmd = std::string(BWC_TOOL) + " tune --config " + (dir / "bad.json").string() + " 2> " +
                          (dir / "err.txt").string() + " > /dev/null";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  CHECK(WEXITSTATUS(status) == 1);
  const auto j = json::parse(slurp(dir / "err.txt"));
  CHECK(j["error"]["kind"] == "validation");
  CHECK(j["error"]["subcommand"] == "tune");
  CHECK(j["error"]["message"].get<std::string>().find("missing-engine") != std::string::npos);
  const std::string usage = std::string(BWC_TOOL) + " frobnicate > /dev/null 2>&1";
  const int st2 = std::system(usage.c_str());
  CHECK(WEXITSTATUS(st2) != 0);
  fs::remove_all(dir);
}
