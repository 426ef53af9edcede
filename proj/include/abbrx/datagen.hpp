#pragma once

// Reverse substitution and the Control / SWR / Full training-set builders.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "abbrx/corpus.hpp"
#include "abbrx/ontology.hpp"

namespace abbrx {

enum class SampleSource { expansion, relative };

enum class Split { train, validation, test, none };

std::string to_string(Split s);
Split split_from_string(const std::string& s);

struct LabeledSample {
  std::string abbrev;
  std::vector<std::string> tokens;  // context window, abbreviation at abbrev_index
  std::size_t abbrev_index = 0;
  std::string doc_id;
  std::string label;  // space-joined target expansion
  SampleSource source = SampleSource::expansion;
  std::string source_concept;  // concept id of the substituted relative
  // Span of the substituted phrase in the source document, when known. Used
  // to rebuild the document with the abbreviation in place for global context.
  std::optional<std::pair<std::size_t, std::size_t>> doc_span;
  Split split = Split::none;

  bool operator==(const LabeledSample&) const = default;
};

/// Throws InvalidArgument unless tokens[abbrev_index] == abbrev and label is non-empty.
void check_sample(const LabeledSample& s);

enum class DatasetMode { control, swr, full };

std::string to_string(DatasetMode m);
DatasetMode dataset_mode_from_string(const std::string& s);

struct SamplingConfig {
  double temperature = 1.0;
  double epsilon = 0.001;
  std::size_t k = 10;
  std::size_t cap = 500;  // samples per expansion
  std::size_t window = 8;  // tokens kept on each side of the abbreviation
  std::uint64_t seed = 0;

  void validate() const;
};

struct DatasetSplit {
  std::vector<LabeledSample> train;
  std::vector<LabeledSample> validation;
  std::vector<LabeledSample> test;

  std::size_t size() const { return train.size() + validation.size() + test.size(); }
  /// All samples, train then validation then test.
  std::vector<LabeledSample> all() const;
};

/// Replaces the phrase at `occurrence` with `abbrev` and cuts a window of up
/// to `window` tokens on each side, clipped to the sentence. Throws
/// InvalidArgument when the corpus tokens at the occurrence differ from `phrase`.
LabeledSample reverse_substitute(const Corpus& corpus, const Occurrence& occurrence,
                                 const Phrase& phrase, const std::string& abbrev,
                                 const std::string& label, std::size_t window,
                                 SampleSource source = SampleSource::expansion,
                                 const std::string& source_concept = {});

/// p_r = exp(-d_r / T) / sum_R exp(-d_R / T), evaluated with max-subtraction.
/// Throws InvalidArgument when T <= 0 or `distances` is empty.
std::vector<double> sampling_distribution(std::span<const double> distances, double temperature);
std::vector<double> sampling_distribution(const RelativeSet& relatives, double temperature);

struct TrainingSet {
  DatasetSplit split;
  std::vector<std::string> labels;   // surviving expansions, inventory order
  std::vector<std::string> dropped;  // expansions without any data
};

/// Builds one abbreviation's dataset. `relative_sets` is indexed like
/// entry.expansions and is only read in full mode. The phrase index must cover
/// every expansion and relative phrase.
TrainingSet build_training_set(const AbbrevEntry& entry, DatasetMode mode,
                               std::span<const RelativeSet> relative_sets,
                               const PhraseIndex& phrase_index, const Corpus& corpus,
                               const SamplingConfig& config);

/// Stratified 60/20/20 split by label, deterministic given seed.
DatasetSplit split_dataset(std::vector<LabeledSample> samples, std::uint64_t seed);

/// Dataset JSONL: {"abbrev","tokens","abbrev_index","doc_id","label","source","split"}
/// plus the optional "doc_span": [begin, length].
void write_dataset_jsonl(const std::filesystem::path& path, std::span<const LabeledSample> samples);
std::vector<LabeledSample> read_dataset_jsonl(const std::filesystem::path& path);

/// Groups samples back into their splits (samples without a split go to test).
DatasetSplit regroup(std::span<const LabeledSample> samples);

}  // namespace abbrx
