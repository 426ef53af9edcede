#pragma once

// Accuracy metrics, bootstrap means, the Wilcoxon signed-rank test and
// model-comparison reports.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace abbrx {

struct PredictionPair {
  std::string predicted;
  std::string truth;
};

struct AbbrevResult {
  std::string abbrev;
  std::size_t num_expansions = 2;  // size of the abbreviation's sense inventory
  std::vector<PredictionPair> pairs;

  std::size_t correct() const;
  /// correct / total; 0 for an empty result.
  double accuracy() const;
  std::vector<bool> outcomes() const;
};

/// Pooled correct / total over results with at least two expansions.
/// Throws InvalidArgument when the pool holds no samples.
double micro_accuracy(std::span<const AbbrevResult> results);

/// Unweighted mean of per-abbreviation accuracies over the same pool
/// (abbreviations without samples are skipped).
double macro_accuracy(std::span<const AbbrevResult> results);

/// Mean accuracy over `resamples` with-replacement resamples of the outcomes.
double bootstrap_mean(const std::vector<bool>& outcomes, std::size_t resamples = 999,
                      std::uint64_t seed = 0);

struct WilcoxonResult {
  std::size_t n = 0;       // pairs after dropping zero differences
  double w_plus = 0.0;     // sum of ranks of positive differences
  double p_value = 1.0;    // two-sided
  bool exact = true;       // exact enumeration (n <= 12) vs normal approximation
};

/// Two-sided Wilcoxon signed-rank test of paired samples. Zero differences
/// are dropped, tied |differences| share average ranks. Exact null
/// distribution for n <= 12, otherwise a normal approximation with tie and
/// continuity corrections. All-zero differences give p = 1. `exact_limit`
/// moves the exact/approximate boundary.
WilcoxonResult wilcoxon_test(std::span<const double> a, std::span<const double> b,
                             std::size_t exact_limit = 12);
double wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b);

struct AbbrevMetric {
  std::string abbrev;
  double accuracy = 0.0;
  double bootstrap_mean = 0.0;
  std::size_t n = 0;
};

struct ModelMetrics {
  std::string model;
  double macro = 0.0;
  double micro = 0.0;
  std::vector<AbbrevMetric> per_abbrev;
};

/// Per-abbreviation bootstrap streams are keyed by (seed, abbreviation).
ModelMetrics summarize(const std::string& model, std::span<const AbbrevResult> results,
                       std::uint64_t seed, std::size_t resamples = 999);

/// {"model", "macro", "micro", "per_abbrev": [{"abbrev", "acc", "bootstrap_mean", "n"}]}
std::string metrics_to_json(const ModelMetrics& m);
ModelMetrics metrics_from_json(const std::string& text);
ModelMetrics load_metrics(const std::filesystem::path& path);

struct PairwiseEntry {
  std::string model_a;
  std::string model_b;
  double macro_delta = 0.0;  // a - b, over the shared abbreviations
  double micro_delta = 0.0;  // a - b, as reported
  double p_value = 1.0;      // Wilcoxon on paired per-abbreviation accuracies
  std::size_t shared = 0;
};

struct HistogramBucket {
  std::string model_a;
  std::string model_b;
  int center_percent = 0;  // bucket mean; bucket is [center - 2.5, center + 2.5)
  std::size_t count = 0;
};

struct ComparisonReport {
  std::vector<ModelMetrics> models;
  std::vector<PairwiseEntry> pairwise;     // every ordered pair, diagonal included
  std::vector<HistogramBucket> histogram;  // per-abbreviation deltas of a - b, a after b
};

/// 5-point bucket centre (in percent) of an accuracy difference in [−1, 1].
int histogram_bucket(double delta);

ComparisonReport compare_models(std::span<const ModelMetrics> models);

/// Writes report.json, pairwise.csv and histogram.csv into `dir`.
void emit_report(const ComparisonReport& report, const std::filesystem::path& dir);

}  // namespace abbrx
