#include "abbrx/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "abbrx/error.hpp"
#include "abbrx/io.hpp"

namespace abbrx {
namespace {

bool is_token_char(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
         c == '_' || c >= 0x80;
}

bool is_sentence_terminator(char c) { return c == '.' || c == '!' || c == '?' || c == '\n'; }

void append_tokens(std::string_view text, std::vector<std::string>& out) {
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && !is_token_char(static_cast<unsigned char>(text[i]))) ++i;
    if (i == text.size()) break;
    std::string token;
    while (i < text.size() && is_token_char(static_cast<unsigned char>(text[i]))) {
      unsigned char c = static_cast<unsigned char>(text[i]);
      if (c >= 'A' && c <= 'Z') c = static_cast<unsigned char>(c - 'A' + 'a');
      token.push_back(static_cast<char>(c));
      ++i;
    }
    out.push_back(std::move(token));
  }
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  append_tokens(text, tokens);
  return tokens;
}

std::string join_concept(std::span<const std::string> phrase) {
  if (phrase.empty()) throw InvalidArgument("join_concept: empty phrase");
  std::string joined = phrase.front();
  for (std::size_t i = 1; i < phrase.size(); ++i) {
    joined.push_back('_');
    joined += phrase[i];
  }
  return joined;
}

std::string phrase_to_string(std::span<const std::string> phrase) {
  std::string s;
  for (std::size_t i = 0; i < phrase.size(); ++i) {
    if (i) s.push_back(' ');
    s += phrase[i];
  }
  return s;
}

Phrase phrase_from_string(std::string_view text) { return tokenize(text); }

Document Document::from_text(std::string id, std::string_view text) {
  Document doc;
  doc.id = std::move(id);
  std::size_t start = 0;
  for (std::size_t i = 0; i <= text.size(); ++i) {
    if (i == text.size() || is_sentence_terminator(text[i])) {
      const std::size_t before = doc.tokens.size();
      append_tokens(text.substr(start, i - start), doc.tokens);
      if (doc.tokens.size() > before) doc.sentences.push_back({before, doc.tokens.size()});
      start = i + 1;
    }
  }
  return doc;
}

std::size_t Document::sentence_of(std::size_t pos) const {
  auto it = std::upper_bound(sentences.begin(), sentences.end(), pos,
                             [](std::size_t p, const SentenceBounds& b) { return p < b.end; });
  if (it == sentences.end() || pos < it->begin)
    throw InvalidArgument("token position outside every sentence");
  return static_cast<std::size_t>(it - sentences.begin());
}

Corpus::Corpus(std::vector<Document> docs) {
  docs_.reserve(docs.size());
  for (auto& d : docs) add(std::move(d));
}

void Corpus::add(Document doc) {
  if (by_id_.contains(doc.id)) throw InvalidArgument("duplicate document id '" + doc.id + "'");
  by_id_.emplace(doc.id, docs_.size());
  docs_.push_back(std::move(doc));
}

std::optional<std::size_t> Corpus::find(std::string_view id) const {
  auto it = by_id_.find(std::string(id));
  if (it == by_id_.end()) return std::nullopt;
  return it->second;
}

Corpus Corpus::load_jsonl(const std::filesystem::path& path) {
  Corpus corpus;
  const auto lines = io::read_lines(path);
  for (std::size_t n = 0; n < lines.size(); ++n) {
    const auto& line = lines[n];
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(path.string(), n + 1, e.what());
    }
    if (!j.is_object() || !j.contains("id") || !j.contains("text") || !j["id"].is_string() ||
        !j["text"].is_string())
      throw ParseError(path.string(), n + 1, "expected {\"id\": str, \"text\": str}");
    try {
      corpus.add(Document::from_text(j["id"].get<std::string>(), j["text"].get<std::string>()));
    } catch (const InvalidArgument& e) {
      throw ParseError(path.string(), n + 1, e.what());
    }
  }
  return corpus;
}

void write_corpus_jsonl(const std::filesystem::path& path,
                        std::span<const std::pair<std::string, std::string>> docs) {
  std::string out;
  for (const auto& [id, text] : docs) {
    nlohmann::json j = {{"id", id}, {"text", text}};
    out += j.dump();
    out.push_back('\n');
  }
  io::write_atomic(path, out);
}

Corpus join_known_phrases(const Corpus& corpus, const std::set<Phrase>& phrases) {
  // Bucket multi-token phrases by first token, longest first.
  std::unordered_map<std::string, std::vector<const Phrase*>> by_first;
  for (const auto& p : phrases)
    if (p.size() >= 2) by_first[p.front()].push_back(&p);
  for (auto& [_, list] : by_first)
    std::stable_sort(list.begin(), list.end(),
                     [](const Phrase* a, const Phrase* b) { return a->size() > b->size(); });

  Corpus joined;
  for (const auto& doc : corpus) {
    Document out;
    out.id = doc.id;
    for (const auto& bounds : doc.sentences) {
      const std::size_t before = out.tokens.size();
      std::size_t i = bounds.begin;
      while (i < bounds.end) {
        const Phrase* match = nullptr;
        if (auto it = by_first.find(doc.tokens[i]); it != by_first.end()) {
          for (const Phrase* p : it->second) {
            if (i + p->size() > bounds.end) continue;
            if (std::equal(p->begin(), p->end(), doc.tokens.begin() + static_cast<long>(i))) {
              match = p;
              break;
            }
          }
        }
        if (match) {
          out.tokens.push_back(join_concept(*match));
          i += match->size();
        } else {
          out.tokens.push_back(doc.tokens[i]);
          ++i;
        }
      }
      out.sentences.push_back({before, out.tokens.size()});
    }
    joined.add(std::move(out));
  }
  return joined;
}

TokenIndex::TokenIndex(const Corpus& corpus) : corpus_(&corpus) {
  for (std::size_t d = 0; d < corpus.size(); ++d) {
    const auto& doc = corpus[d];
    for (std::size_t s = 0; s < doc.sentences.size(); ++s)
      for (std::size_t pos = doc.sentences[s].begin; pos < doc.sentences[s].end; ++pos)
        postings_[doc.tokens[pos]].push_back({d, s, pos});
  }
}

std::span<const Occurrence> TokenIndex::postings(const std::string& token) const {
  auto it = postings_.find(token);
  if (it == postings_.end()) return {};
  return it->second;
}

std::size_t TokenIndex::document_frequency(const std::string& token) const {
  std::size_t df = 0;
  std::size_t last = static_cast<std::size_t>(-1);
  for (const auto& occ : postings(token)) {
    if (occ.doc != last) ++df;
    last = occ.doc;
  }
  return df;
}

std::span<const Occurrence> PhraseIndex::occurrences(const Phrase& phrase) const {
  auto it = entries_.find(phrase);
  if (it == entries_.end()) return {};
  return it->second;
}

PhraseIndex build_phrase_index(const TokenIndex& index, const std::set<Phrase>& phrases) {
  PhraseIndex result;
  const Corpus& corpus = index.corpus();
  for (const auto& raw : phrases) {
    if (raw.empty()) continue;
    Phrase phrase;
    for (const auto& t : raw) {
      auto toks = tokenize(t);
      phrase.insert(phrase.end(), toks.begin(), toks.end());
    }
    auto& hits = result.entries_[raw];
    if (phrase.empty()) continue;

    // Drive the scan from the rarest phrase token, then verify in place.
    std::size_t pivot = 0;
    for (std::size_t i = 1; i < phrase.size(); ++i)
      if (index.postings(phrase[i]).size() < index.postings(phrase[pivot]).size()) pivot = i;

    for (const auto& post : index.postings(phrase[pivot])) {
      if (post.offset < pivot) continue;
      const std::size_t start = post.offset - pivot;
      const auto& doc = corpus[post.doc];
      const auto& bounds = doc.sentences[post.sentence];
      if (start < bounds.begin || start + phrase.size() > bounds.end) continue;
      if (std::equal(phrase.begin(), phrase.end(), doc.tokens.begin() + static_cast<long>(start)))
        hits.push_back({post.doc, post.sentence, start});
    }
    std::sort(hits.begin(), hits.end());
  }
  return result;
}

PhraseIndex build_phrase_index(const Corpus& corpus, const std::set<Phrase>& phrases) {
  return build_phrase_index(TokenIndex(corpus), phrases);
}

IdfTable::IdfTable(std::unordered_map<std::string, double> weights, std::size_t document_count)
    : weights_(std::move(weights)), document_count_(document_count) {}

double IdfTable::weight(const std::string& token) const {
  auto it = weights_.find(token);
  return it == weights_.end() ? unseen_weight() : it->second;
}

double IdfTable::unseen_weight() const {
  return std::log(1.0 + static_cast<double>(document_count_)) + 1.0;
}

void IdfTable::save_tsv(const std::filesystem::path& path) const {
  std::vector<std::pair<std::string, double>> rows(weights_.begin(), weights_.end());
  std::sort(rows.begin(), rows.end());
  std::string out = "#documents\t" + std::to_string(document_count_) + "\n";
  for (const auto& [token, w] : rows) out += token + "\t" + io::format_double(w) + "\n";
  io::write_atomic(path, out);
}

IdfTable IdfTable::load_tsv(const std::filesystem::path& path) {
  const auto lines = io::read_lines(path);
  std::unordered_map<std::string, double> weights;
  std::size_t docs = 0;
  bool have_docs = false;
  for (std::size_t n = 0; n < lines.size(); ++n) {
    const auto& line = lines[n];
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError(path.string(), n + 1, "expected token<TAB>idf");
    const std::string key = line.substr(0, tab);
    const std::string value = line.substr(tab + 1);
    try {
      std::size_t used = 0;
      if (key == "#documents") {
        docs = std::stoull(value, &used);
        have_docs = true;
      } else {
        const double w = std::stod(value, &used);
        if (!(w > 0.0)) throw ParseError(path.string(), n + 1, "idf must be positive");
        weights.emplace(key, w);
      }
      if (used != value.size()) throw std::invalid_argument("trailing characters");
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception&) {
      throw ParseError(path.string(), n + 1, "bad number '" + value + "'");
    }
  }
  if (!have_docs) throw ParseError(path.string(), 0, "missing #documents header");
  return IdfTable(std::move(weights), docs);
}

IdfTable compute_idf(const Corpus& corpus) {
  if (corpus.empty()) throw InvalidArgument("compute_idf: empty corpus");
  std::unordered_map<std::string, std::size_t> df;
  for (const auto& doc : corpus) {
    std::vector<std::string> unique(doc.tokens.begin(), doc.tokens.end());
    std::sort(unique.begin(), unique.end());
    unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
    for (auto& t : unique) ++df[t];
  }
  const double n = static_cast<double>(corpus.size());
  std::unordered_map<std::string, double> weights;
  weights.reserve(df.size());
  for (const auto& [token, count] : df)
    weights.emplace(token, std::log((1.0 + n) / (1.0 + static_cast<double>(count))) + 1.0);
  return IdfTable(std::move(weights), corpus.size());
}

}  // namespace abbrx
