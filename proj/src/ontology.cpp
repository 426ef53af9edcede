#include "abbrx/ontology.hpp"

#include <algorithm>
#include <set>

#include "abbrx/error.hpp"
#include "abbrx/io.hpp"

namespace abbrx {

Ontology::Ontology(std::vector<Concept> concepts) : concepts_(std::move(concepts)) {
  for (std::size_t i = 0; i < concepts_.size(); ++i) {
    if (concepts_[i].phrase.empty())
      throw InvalidArgument("concept '" + concepts_[i].id + "' has an empty phrase");
    if (!by_id_.emplace(concepts_[i].id, i).second)
      throw InvalidArgument("duplicate concept id '" + concepts_[i].id + "'");
    by_phrase_.emplace(phrase_to_string(concepts_[i].phrase), i);
  }
}

const Concept* Ontology::find_by_phrase(const Phrase& phrase) const {
  auto it = by_phrase_.find(phrase_to_string(phrase));
  return it == by_phrase_.end() ? nullptr : &concepts_[it->second];
}

const Concept* Ontology::find_by_id(const std::string& id) const {
  auto it = by_id_.find(id);
  return it == by_id_.end() ? nullptr : &concepts_[it->second];
}

Ontology Ontology::load_tsv(const std::filesystem::path& path) {
  std::vector<Concept> concepts;
  const auto lines = io::read_lines(path);
  std::set<std::string> ids;
  for (std::size_t n = 0; n < lines.size(); ++n) {
    const auto& line = lines[n];
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0)
      throw ParseError(path.string(), n + 1, "expected concept_id<TAB>phrase");
    Concept c{line.substr(0, tab), phrase_from_string(line.substr(tab + 1))};
    if (c.phrase.empty()) throw ParseError(path.string(), n + 1, "empty concept phrase");
    if (!ids.insert(c.id).second)
      throw ParseError(path.string(), n + 1, "duplicate concept id '" + c.id + "'");
    concepts.push_back(std::move(c));
  }
  return Ontology(std::move(concepts));
}

void Ontology::save_tsv(const std::filesystem::path& path) const {
  std::string out;
  for (const auto& c : concepts_) out += c.id + "\t" + phrase_to_string(c.phrase) + "\n";
  io::write_atomic(path, out);
}

std::vector<AbbrevEntry> load_inventory_tsv(const std::filesystem::path& path) {
  std::vector<AbbrevEntry> entries;
  std::unordered_map<std::string, std::size_t> slot;
  const auto lines = io::read_lines(path);
  for (std::size_t n = 0; n < lines.size(); ++n) {
    const auto& line = lines[n];
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw ParseError(path.string(), n + 1, "expected abbrev<TAB>expansion");
    const auto abbrev_tokens = tokenize(line.substr(0, tab));
    if (abbrev_tokens.size() != 1)
      throw ParseError(path.string(), n + 1, "abbreviation must be a single token");
    Phrase expansion = phrase_from_string(line.substr(tab + 1));
    if (expansion.empty()) throw ParseError(path.string(), n + 1, "empty expansion");
    auto [it, fresh] = slot.emplace(abbrev_tokens[0], entries.size());
    if (fresh) entries.push_back({abbrev_tokens[0], {}});
    auto& exps = entries[it->second].expansions;
    if (std::find(exps.begin(), exps.end(), expansion) == exps.end())
      exps.push_back(std::move(expansion));
  }
  return entries;
}

void save_inventory_tsv(const std::filesystem::path& path, std::span<const AbbrevEntry> entries) {
  std::string out;
  for (const auto& e : entries)
    for (const auto& x : e.expansions) out += e.abbrev + "\t" + phrase_to_string(x) + "\n";
  io::write_atomic(path, out);
}

std::vector<AbbrevEntry> filter_abbrevs(std::span<const AbbrevEntry> inventory,
                                        const Ontology& ontology) {
  std::vector<AbbrevEntry> kept;
  for (const auto& entry : inventory) {
    if (entry.abbrev.empty()) continue;
    AbbrevEntry out{entry.abbrev, {}};
    for (const auto& x : entry.expansions) {
      if (!ontology.find_by_phrase(x)) continue;
      if (std::find(out.expansions.begin(), out.expansions.end(), x) == out.expansions.end())
        out.expansions.push_back(x);
    }
    if (out.expansions.size() >= 2) kept.push_back(std::move(out));
  }
  return kept;
}

CandidatePool::CandidatePool(const Ontology& ontology, const EmbeddingModel& embeddings,
                             const PhraseIndex& concept_index) {
  for (const auto& c : ontology.concepts())
    if (concept_index.count(c.phrase) > 0)
      entries_.push_back({&c, embeddings.embed_phrase(c.phrase)});
}

RelativeSet nearest_relatives(const Phrase& expansion, const EmbeddingModel& embeddings,
                              const CandidatePool& pool, bool expansion_in_corpus,
                              std::size_t k, double epsilon) {
  if (pool.size() == 0) throw InvalidArgument("nearest_relatives: no candidate concepts");
  const auto target = embeddings.embed_phrase(expansion);

  std::vector<Relative> scored;
  scored.reserve(pool.size());
  for (const auto& e : pool.entries()) {
    if (e.item->phrase == expansion) continue;
    scored.push_back({e.item->id, e.item->phrase, euclidean_distance(target, e.vector), false});
  }
  auto closer = [](const Relative& a, const Relative& b) {
    return a.distance != b.distance ? a.distance < b.distance : a.concept_id < b.concept_id;
  };
  const std::size_t keep = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<long>(keep), scored.end(), closer);
  scored.resize(keep);

  RelativeSet set{expansion, std::move(scored)};
  if (expansion_in_corpus) {
    Relative self{"", expansion, epsilon, true};
    for (const auto& e : pool.entries())
      if (e.item->phrase == expansion) {
        self.concept_id = e.item->id;
        break;
      }
    auto pos = std::upper_bound(set.relatives.begin(), set.relatives.end(), self,
                                [](const Relative& a, const Relative& b) {
                                  return a.distance < b.distance;
                                });
    // Equal distances: the expansion goes first.
    while (pos != set.relatives.begin() && (pos - 1)->distance == epsilon) --pos;
    set.relatives.insert(pos, std::move(self));
  }
  return set;
}

RelativeSet nearest_relatives(const Phrase& expansion, const EmbeddingModel& embeddings,
                              const Ontology& ontology, const Corpus& corpus, std::size_t k,
                              double epsilon) {
  std::set<Phrase> phrases = concept_phrases(ontology);
  phrases.insert(expansion);
  const auto index = build_phrase_index(corpus, phrases);
  const CandidatePool pool(ontology, embeddings, index);
  return nearest_relatives(expansion, embeddings, pool, index.count(expansion) > 0, k, epsilon);
}

std::set<Phrase> concept_phrases(const Ontology& ontology) {
  std::set<Phrase> phrases;
  for (const auto& c : ontology.concepts()) phrases.insert(c.phrase);
  return phrases;
}

}  // namespace abbrx
