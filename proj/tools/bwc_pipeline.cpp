// bwc-pipeline <subcommand> --config <path> [--jobs N] [--seed S] [--criterion c1..c4] [--out DIR]

#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "bwc/errors.hpp"
#include "bwc/pipeline.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Body-camera speech data pipeline"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::size_t jobs = 0;
  std::uint64_t seed = 0;
  std::string criterion;
  std::string out_dir;

  for (const auto& name : bwc::subcommands()) {
    auto* sub = app.add_subcommand(name, name == "all" ? "run every stage in order" : "run the " + name + " stage");
    sub->add_option("--config", config_path, "pipeline config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--jobs", jobs, "parallel workers across stops")->check(CLI::PositiveNumber);
    sub->add_option("--seed", seed, "master seed");
    sub->add_option("--criterion", criterion, "training-set filter")->check(CLI::IsMember({"c1", "c2", "c3", "c4"}));
    sub->add_option("--out", out_dir, "output directory");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  const std::string name = app.get_subcommands().front()->get_name();
  const auto* sub = app.get_subcommands().front();
  bwc::ConfigOverrides ov;
  if (sub->count("--jobs")) ov.jobs = jobs;
  if (sub->count("--seed")) ov.seed = seed;
  if (sub->count("--criterion")) ov.criterion = criterion;
  if (sub->count("--out")) ov.out_dir = out_dir;

  bwc::PipelineConfig cfg;
  try {
    cfg = bwc::load_config(config_path, ov);
  } catch (const bwc::Error& e) {
    std::cerr << nlohmann::json{{"error", {{"kind", e.kind()}, {"message", e.what()}, {"subcommand", name}}}}.dump()
              << "\n";
    return 1;
  }
  return bwc::run_subcommand(name, cfg, std::cout, std::cerr);
}
