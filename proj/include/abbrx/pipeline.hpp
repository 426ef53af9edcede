#pragma once

// End-to-end orchestration: one config, one output directory, one function
// per pipeline step. The command-line tool is a thin wrapper around these.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "abbrx/datagen.hpp"
#include "abbrx/embeddings.hpp"
#include "abbrx/eval.hpp"
#include "abbrx/hpo.hpp"
#include "abbrx/model.hpp"
#include "abbrx/synth.hpp"

namespace abbrx {

inline constexpr const char* kVersion = "0.1.0";

struct PipelinePaths {
  // Empty input paths default to the synthetic bundle under <output_dir>/data.
  std::filesystem::path train_corpus;
  std::filesystem::path test_corpus;
  std::filesystem::path ontology;
  std::filesystem::path inventory;
  std::filesystem::path gold_labels;  // dataset JSONL, for evaluate --labels gold
  std::filesystem::path output_dir = "abbrx-out";
};

struct PipelineConfig {
  PipelinePaths paths;
  SynthConfig synth;
  EmbeddingConfig embedding;
  SamplingConfig sampling;
  TpeConfig tpe;
  ModelConfig model;
  std::size_t tpe_inner_epochs = 10;  // epochs of the reduced model trained per TPE trial
  DatasetMode mode = DatasetMode::full;
  bool use_global = false;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::vector<std::string> abbrevs;  // restrict to these; empty means all

  /// Copy with every module seed derived from `seed`, dims made consistent
  /// and default paths filled in.
  PipelineConfig resolved() const;
  /// Throws ConfigError on invalid settings.
  void validate() const;
};

/// Relative paths in the file are resolved against `base_dir`.
PipelineConfig pipeline_config_from_json(const std::string& text,
                                         const std::filesystem::path& base_dir = {});
PipelineConfig load_pipeline_config(const std::filesystem::path& path);
/// Canonical JSON form (stable key order).
std::string pipeline_config_to_json(const PipelineConfig& config);
/// Hex digest of the canonical JSON of the resolved config.
std::string config_hash(const PipelineConfig& config);

/// Directory-safe form of an abbreviation: [a-z0-9_] kept, other bytes as %XX.
std::string sanitize_name(const std::string& abbrev);
/// "<mode>-local" or "<mode>-global".
std::string model_name(DatasetMode mode, bool use_global);

enum class LabelSource { rs, gold, heldout };
std::string to_string(LabelSource s);
LabelSource label_source_from_string(const std::string& s);

/// Output layout under paths.output_dir.
struct Layout {
  std::filesystem::path root;

  std::filesystem::path manifest() const { return root / "manifest.json"; }
  std::filesystem::path embeddings() const { return root / "embeddings" / "vectors.txt"; }
  std::filesystem::path idf() const { return root / "embeddings" / "idf.tsv"; }
  std::filesystem::path dataset_dir(DatasetMode mode, const std::string& abbrev) const;
  std::filesystem::path model_file(DatasetMode mode, bool use_global, const std::string& abbrev) const;
  std::filesystem::path metrics_file(const std::string& model, LabelSource labels) const;
  std::filesystem::path predictions_file(const std::string& model, LabelSource labels) const;
  std::filesystem::path report_dir() const { return root / "report"; }
};

/// Writes the synthetic bundle to the configured input paths.
void run_synth_gen(const PipelineConfig& config);
/// Trains embeddings (ontology phrases pre-joined) and the IDF table.
void run_train_embeddings(const PipelineConfig& config);
/// Relatives, temperature search (full mode) and one dataset per abbreviation.
void run_build_dataset(const PipelineConfig& config);
/// One model per abbreviation for the configured mode and context setting.
void run_train(const PipelineConfig& config);
/// Scores the configured model and writes its metrics JSON.
ModelMetrics run_evaluate(const PipelineConfig& config, LabelSource labels);
/// Pairwise comparison of metrics files, written to `out_dir`.
ComparisonReport run_compare(std::span<const std::filesystem::path> metrics_files,
                             const std::filesystem::path& out_dir);

/// Runs fn(i, worker) for i in [0, n) on `jobs` threads. The first exception
/// (by index) is rethrown after all workers finish.
void parallel_for(std::size_t n, std::size_t jobs,
                  const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace abbrx
