// abbrx: command-line front end for the disambiguation pipeline.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "abbrx/error.hpp"
#include "abbrx/log.hpp"
#include "abbrx/pipeline.hpp"

namespace {

int fail(const char* kind, const std::string& message, int code) {
  nlohmann::json j = {{"error", kind}, {"message", message}};
  std::cerr << j.dump() << "\n";
  return code;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (ch != ' ') {
      cur.push_back(ch);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Abbreviation disambiguation toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", std::string(abbrx::kVersion));

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string mode;
  std::optional<std::size_t> jobs;
  std::string abbrevs;
  std::string output_dir;
  bool global = false, no_global = false;
  app.add_option("--config", config_path, "Pipeline config (JSON)")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Global seed");
  app.add_option("--mode", mode, "Training-set regime")->check(CLI::IsMember({"control", "swr", "full"}));
  auto* g = app.add_flag("--global", global, "Use global document context");
  app.add_flag("--no-global", no_global, "Local context only")->excludes(g);
  app.add_option("--abbrevs", abbrevs, "Comma-separated abbreviations to process");
  app.add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--output", output_dir, "Output directory (overrides paths.output_dir)");

  auto* synth = app.add_subcommand("synth-gen", "Write a synthetic corpus/ontology/inventory bundle");
  auto* emb = app.add_subcommand("train-embeddings", "Train subword embeddings and IDF weights");
  auto* build = app.add_subcommand("build-dataset", "Reverse substitution and augmentation per abbreviation");
  auto* train = app.add_subcommand("train", "Train one model per abbreviation");
  auto* evaluate = app.add_subcommand("evaluate", "Score models and write metrics JSON");
  std::string labels = "rs";
  std::string gold;
  evaluate->add_option("--labels", labels, "Label source")->check(CLI::IsMember({"rs", "gold", "heldout"}));
  evaluate->add_option("--gold", gold, "Gold dataset JSONL (implies --labels gold)");
  auto* compare = app.add_subcommand("compare", "Pairwise comparison of metrics files");
  std::vector<std::string> metrics_files;
  std::string report_dir;
  compare->add_option("metrics", metrics_files, "Metrics JSON files")->required()->expected(2, -1);
  compare->add_option("--out", report_dir, "Report directory (default <output>/report)");
  auto* show = app.add_subcommand("config", "Print the effective configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  abbrx::init_logging();
  try {
    abbrx::PipelineConfig config =
        config_path.empty() ? abbrx::PipelineConfig{} : abbrx::load_pipeline_config(config_path);
    if (seed) config.seed = *seed;
    if (!mode.empty()) config.mode = abbrx::dataset_mode_from_string(mode);
    if (global) config.use_global = true;
    if (no_global) config.use_global = false;
    if (jobs) config.jobs = *jobs;
    if (!abbrevs.empty()) config.abbrevs = split_list(abbrevs);
    if (!output_dir.empty()) config.paths.output_dir = output_dir;
    if (!gold.empty()) {
      config.paths.gold_labels = gold;
      labels = "gold";
    }
    config.resolved().validate();

    if (synth->parsed()) {
      abbrx::run_synth_gen(config);
    } else if (emb->parsed()) {
      abbrx::run_train_embeddings(config);
    } else if (build->parsed()) {
      abbrx::run_build_dataset(config);
    } else if (train->parsed()) {
      abbrx::run_train(config);
    } else if (evaluate->parsed()) {
      const auto source = abbrx::label_source_from_string(labels);
      const auto m = abbrx::run_evaluate(config, source);
      std::printf("%s\n", abbrx::Layout{config.resolved().paths.output_dir}
                              .metrics_file(m.model, source)
                              .string()
                              .c_str());
    } else if (compare->parsed()) {
      std::vector<std::filesystem::path> files(metrics_files.begin(), metrics_files.end());
      const auto out = report_dir.empty()
                           ? abbrx::Layout{config.resolved().paths.output_dir}.report_dir()
                           : std::filesystem::path(report_dir);
      abbrx::run_compare(files, out);
      std::printf("%s\n", out.string().c_str());
    } else if (show->parsed()) {
      std::cout << abbrx::pipeline_config_to_json(config.resolved());
    }
  } catch (const abbrx::ConfigError& e) {
    return fail("config", e.what(), 2);
  } catch (const abbrx::ParseError& e) {
    return fail("parse", e.what(), 3);
  } catch (const abbrx::InvalidArgument& e) {
    return fail("invalid-argument", e.what(), 4);
  } catch (const abbrx::Error& e) {
    return fail("error", e.what(), 1);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), 1);
  }
  return 0;
}
