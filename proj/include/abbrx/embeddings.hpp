#pragma once

// Subword skip-gram embeddings with negative sampling. A word is the bag of
// its own vector plus the hashed character n-grams of "<word>"; an
// out-of-vocabulary word is the bag of its n-grams alone.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "abbrx/corpus.hpp"

namespace abbrx {

struct EmbeddingConfig {
  int dim = 100;
  int min_ngram = 3;
  int max_ngram = 6;
  std::uint32_t bucket_count = 2'000'000;
  int window = 5;
  int negative_samples = 5;
  int epochs = 5;
  double learning_rate = 0.05;
  int min_count = 1;
  std::uint64_t seed = 1;

  /// Throws ConfigError on dim <= 0, min_ngram > max_ngram, bucket_count == 0, ...
  void validate() const;

  bool operator==(const EmbeddingConfig&) const = default;
};

/// Hashed n-gram bucket ids of `word`, computed on "<word>" with UTF-8 aware
/// character boundaries.
std::vector<std::uint32_t> subword_buckets(std::string_view word, int min_ngram, int max_ngram,
                                           std::uint32_t bucket_count);

class EmbeddingModel {
 public:
  using Vector = std::vector<float>;

  EmbeddingModel() = default;

  const EmbeddingConfig& config() const { return config_; }
  int dim() const { return config_.dim; }
  std::size_t vocab_size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }
  bool in_vocabulary(std::string_view token) const;

  /// Composed vector of a single token (no tokenization applied).
  Vector token_vector(std::string_view token) const;

  /// Embeds any term: tokenizes it, joins multi-token terms with '_' and
  /// composes from subwords when the joined token is out of vocabulary.
  /// Throws InvalidArgument when `term` has no tokens.
  Vector embed_term(std::string_view term) const;
  Vector embed_phrase(std::span<const std::string> phrase) const;

  /// word2vec text format at `path` (first line "vocab_size dim"), plus
  /// the trained n-gram buckets in `path` + ".subwords".
  void save(const std::filesystem::path& path) const;
  static EmbeddingModel load(const std::filesystem::path& path);

  bool operator==(const EmbeddingModel&) const = default;

 private:
  friend EmbeddingModel train_embeddings(const Corpus&, const EmbeddingConfig&);

  Vector bucket_vector(std::uint32_t bucket) const;
  Vector compose_subwords(std::string_view token) const;

  EmbeddingConfig config_;
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::size_t> word_index_;
  std::vector<float> word_vectors_;  // composed, vocab_size x dim
  std::unordered_map<std::uint32_t, Vector> buckets_;  // trained buckets only
};

/// Initial value of an n-gram bucket row: uniform(-1/dim, 1/dim) from a
/// stream keyed by (seed, bucket). Untrained buckets keep this value.
EmbeddingModel::Vector initial_bucket_vector(std::uint64_t seed, std::uint32_t bucket, int dim);

/// Throws InvalidArgument on an empty corpus and ConfigError on a bad config.
/// Single-threaded and deterministic for a given (corpus, config).
EmbeddingModel train_embeddings(const Corpus& corpus, const EmbeddingConfig& config);

double euclidean_distance(std::span<const float> a, std::span<const float> b);
double cosine_similarity(std::span<const float> a, std::span<const float> b);

}  // namespace abbrx
