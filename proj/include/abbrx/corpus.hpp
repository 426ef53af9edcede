#pragma once

// Tokenization, documents, positional phrase index and IDF weights.

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace abbrx {

using Phrase = std::vector<std::string>;

/// Lowercase tokens of `text`. Token characters are ASCII letters, digits,
/// '_' and any byte >= 0x80 (so UTF-8 words stay whole); everything else
/// separates tokens.
std::vector<std::string> tokenize(std::string_view text);

/// Tokens joined with '_' into a single token. Throws InvalidArgument when
/// `phrase` is empty.
std::string join_concept(std::span<const std::string> phrase);

/// Space-joined surface form of a phrase ("intravenous fluid").
std::string phrase_to_string(std::span<const std::string> phrase);

/// tokenize() applied to a phrase string.
Phrase phrase_from_string(std::string_view text);

struct SentenceBounds {
  std::size_t begin = 0;  // first token index
  std::size_t end = 0;    // one past the last token index

  std::size_t size() const { return end - begin; }
  bool operator==(const SentenceBounds&) const = default;
};

struct Document {
  std::string id;
  std::vector<std::string> tokens;
  std::vector<SentenceBounds> sentences;

  /// Splits on '.', '!', '?' and newline, tokenizes each sentence and drops
  /// sentences with no tokens.
  static Document from_text(std::string id, std::string_view text);

  std::span<const std::string> sentence(std::size_t i) const {
    const auto& b = sentences.at(i);
    return std::span<const std::string>(tokens).subspan(b.begin, b.size());
  }

  /// Index of the sentence containing token `pos`.
  std::size_t sentence_of(std::size_t pos) const;

  bool operator==(const Document&) const = default;
};

class Corpus {
 public:
  Corpus() = default;
  explicit Corpus(std::vector<Document> docs);

  /// Throws InvalidArgument on a duplicate id.
  void add(Document doc);

  std::size_t size() const { return docs_.size(); }
  bool empty() const { return docs_.empty(); }
  const Document& operator[](std::size_t i) const { return docs_[i]; }
  const std::vector<Document>& documents() const { return docs_; }
  auto begin() const { return docs_.begin(); }
  auto end() const { return docs_.end(); }

  /// Position of the document with this id, if any.
  std::optional<std::size_t> find(std::string_view id) const;

  /// JSONL, one {"id": str, "text": str} object per line.
  static Corpus load_jsonl(const std::filesystem::path& path);

 private:
  std::vector<Document> docs_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

/// Writes one {"id", "text"} line per (id, raw text) pair.
void write_corpus_jsonl(const std::filesystem::path& path,
                        std::span<const std::pair<std::string, std::string>> docs);

/// Rewrites every document so that each phrase of length >= 2 in `phrases`
/// becomes one '_'-joined token (greedy, longest phrase first, never across a
/// sentence boundary). Used to pre-join ontology concepts for embedding training.
Corpus join_known_phrases(const Corpus& corpus, const std::set<Phrase>& phrases);

struct Occurrence {
  std::size_t doc = 0;       // position in the corpus
  std::size_t sentence = 0;  // sentence index within the document
  std::size_t offset = 0;    // document-level token offset of the first phrase token

  auto operator<=>(const Occurrence&) const = default;
};

/// Token -> positional postings. Built once per corpus and shared by phrase lookups.
class TokenIndex {
 public:
  explicit TokenIndex(const Corpus& corpus);

  std::span<const Occurrence> postings(const std::string& token) const;
  std::size_t document_frequency(const std::string& token) const;
  const Corpus& corpus() const { return *corpus_; }

 private:
  const Corpus* corpus_;
  std::unordered_map<std::string, std::vector<Occurrence>> postings_;
};

/// Exact token-sequence occurrences of a fixed set of phrases, each phrase
/// indexed independently (no longest-match suppression). Occurrences never
/// cross sentence boundaries and are sorted by (doc, sentence, offset).
class PhraseIndex {
 public:
  PhraseIndex() = default;

  std::span<const Occurrence> occurrences(const Phrase& phrase) const;
  std::size_t count(const Phrase& phrase) const { return occurrences(phrase).size(); }
  bool contains(const Phrase& phrase) const { return entries_.contains(phrase); }
  const std::map<Phrase, std::vector<Occurrence>>& entries() const { return entries_; }

 private:
  friend PhraseIndex build_phrase_index(const TokenIndex&, const std::set<Phrase>&);
  std::map<Phrase, std::vector<Occurrence>> entries_;
};

PhraseIndex build_phrase_index(const TokenIndex& index, const std::set<Phrase>& phrases);
PhraseIndex build_phrase_index(const Corpus& corpus, const std::set<Phrase>& phrases);

/// Smoothed inverse document frequency: idf(t) = ln((1 + N) / (1 + df(t))) + 1.
class IdfTable {
 public:
  IdfTable() = default;
  IdfTable(std::unordered_map<std::string, double> weights, std::size_t document_count);

  /// Weight of `token`; unseen tokens get ln(1 + N) + 1.
  double weight(const std::string& token) const;
  double unseen_weight() const;
  std::size_t document_count() const { return document_count_; }
  std::size_t size() const { return weights_.size(); }
  const std::unordered_map<std::string, double>& weights() const { return weights_; }

  /// TSV "token\tidf", sorted by token, preceded by a "#documents\tN" line.
  void save_tsv(const std::filesystem::path& path) const;
  static IdfTable load_tsv(const std::filesystem::path& path);

 private:
  std::unordered_map<std::string, double> weights_;
  std::size_t document_count_ = 0;
};

/// Throws InvalidArgument on an empty corpus.
IdfTable compute_idf(const Corpus& corpus);

}  // namespace abbrx
