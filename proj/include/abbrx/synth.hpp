#pragma once

// Seeded synthetic bundle: a training corpus, an orthogonal test corpus, an
// ontology and an abbreviation inventory with topic structure, skewed
// expansion frequencies and train-absent expansions.

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "abbrx/ontology.hpp"

namespace abbrx {

struct SynthConfig {
  std::size_t num_topics = 24;
  std::size_t vocab_per_topic = 30;
  std::size_t generic_vocab = 300;
  std::size_t relatives_per_topic = 6;  // non-expansion concepts per topic
  std::size_t num_abbrevs = 20;
  double mean_expansions = 3.46;  // 2 + Binomial(max - 2, p)
  std::size_t max_expansions = 5;
  double skew = 0.4;  // probability an expansion is withheld from the train corpus

  std::size_t train_documents = 1200;
  std::size_t test_documents = 480;
  std::size_t sentences_per_document = 6;  // filler sentences, mentions come on top
  std::size_t min_sentence_length = 5;
  std::size_t max_sentence_length = 12;

  // Train-corpus mention counts.
  std::size_t head_count = 100;  // most frequent expansion of an abbreviation
  double zipf_exponent = 1.2;
  std::size_t min_count = 4;
  std::size_t relative_count = 40;
  // Test-corpus mention counts (flat profile).
  std::size_t test_count = 20;
  std::size_t test_relative_count = 4;

  double topic_density = 0.5;          // share of topic words in a sentence
  double secondary_weight = 0.3;       // share of filler topic words from the second topic
  double generic_context_rate = 0.35;  // mentions whose sentence has no topic words
  double offtopic_rate = 0.15;         // mentions placed in a document of another main topic
  bool noise_entries = true;           // add inventory rows that filtering must remove
  std::uint64_t seed = 0;

  /// Throws ConfigError on invalid or infeasible settings.
  void validate() const;
};

struct MentionRecord {
  std::string corpus;  // "train" or "test"
  std::string doc_id;
  std::size_t sentence = 0;
  std::size_t offset = 0;  // document-level token offset
  std::string concept_id;

  bool operator==(const MentionRecord&) const = default;
};

struct SynthBundle {
  std::vector<std::pair<std::string, std::string>> train_docs;  // (id, text)
  std::vector<std::pair<std::string, std::string>> test_docs;
  Ontology ontology;
  std::vector<AbbrevEntry> inventory;
  std::vector<MentionRecord> log;  // every concept mention in both corpora
  std::vector<std::pair<std::string, std::size_t>> concept_topics;  // (concept id, topic)
  std::vector<std::string> withheld;  // concept ids absent from the train corpus
};

SynthBundle generate(const SynthConfig& config);

struct BundlePaths {
  std::filesystem::path train_corpus;
  std::filesystem::path test_corpus;
  std::filesystem::path ontology;
  std::filesystem::path inventory;
  std::filesystem::path log;  // JSONL
  std::filesystem::path topics;  // TSV "concept_id\ttopic\twithheld"
};

BundlePaths default_bundle_paths(const std::filesystem::path& dir);
void write_bundle(const SynthBundle& bundle, const BundlePaths& paths);

std::vector<MentionRecord> read_generation_log(const std::filesystem::path& path);

}  // namespace abbrx
