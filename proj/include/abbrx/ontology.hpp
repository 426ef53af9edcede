#pragma once

// Concept ontology, abbreviation inventory and embedding-space neighbours.

#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "abbrx/corpus.hpp"
#include "abbrx/embeddings.hpp"

namespace abbrx {

struct Concept {
  std::string id;
  Phrase phrase;

  bool operator==(const Concept&) const = default;
};

class Ontology {
 public:
  Ontology() = default;
  explicit Ontology(std::vector<Concept> concepts);

  const std::vector<Concept>& concepts() const { return concepts_; }
  std::size_t size() const { return concepts_.size(); }

  /// Exact (lowercase token) phrase lookup. First concept wins on duplicates.
  const Concept* find_by_phrase(const Phrase& phrase) const;
  const Concept* find_by_id(const std::string& id) const;

  /// TSV "concept_id\tphrase".
  static Ontology load_tsv(const std::filesystem::path& path);
  void save_tsv(const std::filesystem::path& path) const;

 private:
  std::vector<Concept> concepts_;
  std::unordered_map<std::string, std::size_t> by_phrase_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

struct AbbrevEntry {
  std::string abbrev;
  std::vector<Phrase> expansions;

  bool operator==(const AbbrevEntry&) const = default;
};

/// TSV "abbrev\texpansion", one row per pair. Rows are grouped by
/// abbreviation in first-appearance order; duplicate expansions are dropped.
std::vector<AbbrevEntry> load_inventory_tsv(const std::filesystem::path& path);
void save_inventory_tsv(const std::filesystem::path& path, std::span<const AbbrevEntry> entries);

/// Drops expansions that do not resolve to an ontology concept, then drops
/// entries left with fewer than two expansions. Idempotent.
std::vector<AbbrevEntry> filter_abbrevs(std::span<const AbbrevEntry> inventory,
                                        const Ontology& ontology);

struct Relative {
  std::string concept_id;
  Phrase phrase;
  double distance = 0.0;
  bool is_self = false;  // the expansion itself, at distance epsilon

  bool operator==(const Relative&) const = default;
};

struct RelativeSet {
  Phrase expansion;
  std::vector<Relative> relatives;  // ascending by distance
};

/// Ontology concepts that occur in the corpus, with their embeddings.
/// Built once and shared by every nearest_relatives() call.
class CandidatePool {
 public:
  CandidatePool(const Ontology& ontology, const EmbeddingModel& embeddings,
                const PhraseIndex& concept_index);

  struct Entry {
    const Concept* item;
    EmbeddingModel::Vector vector;
  };
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

 private:
  std::vector<Entry> entries_;
};

/// The k concepts nearest to `expansion` by Euclidean distance (excluding a
/// candidate with the expansion's own phrase; ties broken by concept id),
/// plus the expansion itself at distance `epsilon` when it occurs in the
/// corpus. Throws InvalidArgument when the pool is empty.
RelativeSet nearest_relatives(const Phrase& expansion, const EmbeddingModel& embeddings,
                              const CandidatePool& pool, bool expansion_in_corpus,
                              std::size_t k = 10, double epsilon = 0.001);

/// Convenience form that builds the candidate pool from scratch.
RelativeSet nearest_relatives(const Phrase& expansion, const EmbeddingModel& embeddings,
                              const Ontology& ontology, const Corpus& corpus,
                              std::size_t k = 10, double epsilon = 0.001);

/// All concept phrases of the ontology, for building a phrase index.
std::set<Phrase> concept_phrases(const Ontology& ontology);

}  // namespace abbrx
