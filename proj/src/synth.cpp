#include "abbrx/synth.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "abbrx/error.hpp"
#include "abbrx/io.hpp"
#include "abbrx/rng.hpp"

namespace abbrx {
namespace {

constexpr std::string_view kConsonants = "bcdfghklmnprstvz";
constexpr std::string_view kVowels = "aeiou";
// Letters never used by vocabulary words; every abbreviation contains one.
constexpr std::string_view kAbbrevLetters = "jqwxy";
constexpr int kMaxAttempts = 10000;

struct ConceptInfo {
  std::string id;
  Phrase phrase;
  std::size_t topic = 0;
  bool withheld = false;
  std::size_t train_count = 0;
  std::size_t test_count = 0;
};

struct Topic {
  std::string root;
  std::vector<std::string> words;
};

std::string format_id(const char* prefix, std::size_t n, int width) {
  std::string digits = std::to_string(n);
  if (static_cast<int>(digits.size()) < width)
    digits.insert(0, static_cast<std::size_t>(width) - digits.size(), '0');
  return prefix + digits;
}

bool contains_run(const Phrase& hay, const Phrase& needle) {
  if (needle.size() > hay.size()) return false;
  for (std::size_t i = 0; i + needle.size() <= hay.size(); ++i)
    if (std::equal(needle.begin(), needle.end(), hay.begin() + static_cast<long>(i))) return true;
  return false;
}

class Generator {
 public:
  explicit Generator(const SynthConfig& config) : cfg_(config), rng_(config.seed) {}

  SynthBundle run() {
    make_topics();
    make_generic();
    for (std::size_t t = 0; t < cfg_.num_topics; ++t)
      for (std::size_t r = 0; r < cfg_.relatives_per_topic; ++r) {
        const std::size_t c = make_concept(t);
        concepts_[c].train_count = cfg_.relative_count;
        concepts_[c].test_count = cfg_.test_relative_count;
      }
    make_abbrevs();
    index_phrases();

    SynthBundle bundle;
    bundle.train_docs = make_corpus("train", cfg_.train_documents, true, bundle.log);
    bundle.test_docs = make_corpus("test", cfg_.test_documents, false, bundle.log);

    std::vector<Concept> onto;
    for (const auto& c : concepts_) {
      onto.push_back({c.id, c.phrase});
      bundle.concept_topics.emplace_back(c.id, c.topic);
      if (c.withheld) bundle.withheld.push_back(c.id);
    }
    bundle.ontology = Ontology(std::move(onto));
    bundle.inventory = std::move(inventory_);
    return bundle;
  }

 private:
  std::string syllable() {
    std::string s;
    s += kConsonants[rng_.index(kConsonants.size())];
    s += kVowels[rng_.index(kVowels.size())];
    return s;
  }

  bool claim(const std::string& w) { return used_.insert(w).second; }

  void make_topics() {
    std::set<std::string> roots;
    while (roots.size() < cfg_.num_topics) {
      std::string r = syllable();
      r += kConsonants[rng_.index(kConsonants.size())];
      roots.insert(r);
    }
    // Keep the draw order, not the sorted order, so topics get unrelated roots.
    topics_.clear();
    std::vector<std::string> ordered(roots.begin(), roots.end());
    rng_.shuffle(ordered);
    for (auto& r : ordered) topics_.push_back({r, {}});
    for (auto& t : topics_)
      while (t.words.size() < cfg_.vocab_per_topic) t.words.push_back(topic_word(t));
  }

  std::string topic_word(const Topic& t) {
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
      std::string w;
      const std::size_t pre = rng_.index(3), post = rng_.index(3);
      if (pre + post == 0) continue;
      for (std::size_t i = 0; i < pre; ++i) w += syllable();
      w += t.root;
      for (std::size_t i = 0; i < post; ++i) w += syllable();
      if (claim(w)) return w;
    }
    throw ConfigError("synth: cannot generate enough distinct topic words");
  }

  bool has_root(const std::string& w) const {
    for (const auto& t : topics_)
      if (w.find(t.root) != std::string::npos) return true;
    return false;
  }

  void make_generic() {
    int failures = 0;
    while (generic_.size() < cfg_.generic_vocab) {
      std::string w;
      const std::size_t n = 1 + rng_.index(3);
      for (std::size_t i = 0; i < n; ++i) w += syllable();
      if (has_root(w) || !claim(w)) {
        if (++failures > kMaxAttempts) throw ConfigError("synth: generic vocabulary too large");
        continue;
      }
      generic_.push_back(w);
    }
  }

  bool phrase_conflicts(const Phrase& p) const {
    for (const auto& c : concepts_)
      if (contains_run(c.phrase, p) || contains_run(p, c.phrase)) return true;
    return false;
  }

  std::size_t make_concept(std::size_t topic) {
    auto& t = topics_[topic];
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
      const double u = rng_.uniform();
      const std::size_t len = u < 0.25 ? 1 : (u < 0.75 ? 2 : 3);
      Phrase p;
      if (len == 1) {
        // A dedicated token that only ever appears as this concept.
        p.push_back(topic_word(t));
      } else {
        if (t.words.size() < len) continue;
        std::vector<std::size_t> picks;
        while (picks.size() < len) {
          const std::size_t w = rng_.index(t.words.size());
          if (std::find(picks.begin(), picks.end(), w) == picks.end()) picks.push_back(w);
        }
        for (std::size_t w : picks) p.push_back(t.words[w]);
      }
      if (phrase_conflicts(p)) continue;
      concepts_.push_back({format_id("C", concepts_.size() + 1, 5), std::move(p), topic});
      return concepts_.size() - 1;
    }
    throw ConfigError("synth: cannot place another concept in topic " + std::to_string(topic) +
                      "; raise vocab_per_topic");
  }

  std::string abbrev_token() {
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
      std::string a;
      const std::size_t len = 2 + rng_.index(2);
      a += kAbbrevLetters[rng_.index(kAbbrevLetters.size())];
      for (std::size_t i = 1; i < len; ++i) {
        const bool special = rng_.bernoulli(0.3);
        a += special ? kAbbrevLetters[rng_.index(kAbbrevLetters.size())]
                     : kConsonants[rng_.index(kConsonants.size())];
      }
      if (rng_.bernoulli(0.5)) std::swap(a[0], a[a.size() - 1]);
      if (claim(a)) return a;
    }
    throw ConfigError("synth: cannot generate enough distinct abbreviations");
  }

  void make_abbrevs() {
    const double p = (cfg_.mean_expansions - 2.0) / static_cast<double>(cfg_.max_expansions - 2);
    for (std::size_t a = 0; a < cfg_.num_abbrevs; ++a) {
      std::size_t n = 2;
      for (std::size_t i = 2; i < cfg_.max_expansions; ++i) n += rng_.bernoulli(p) ? 1 : 0;
      std::vector<std::size_t> order(cfg_.num_topics);
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      rng_.shuffle(order);

      AbbrevEntry entry{abbrev_token(), {}};
      std::vector<std::size_t> members;
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = make_concept(order[i]);
        members.push_back(c);
        entry.expansions.push_back(concepts_[c].phrase);
        concepts_[c].withheld = rng_.bernoulli(cfg_.skew);
        concepts_[c].test_count = cfg_.test_count;
      }
      if (std::all_of(members.begin(), members.end(),
                      [&](std::size_t c) { return concepts_[c].withheld; }))
        concepts_[members[rng_.index(members.size())]].withheld = false;

      // Zipf-like train profile over the kept expansions, in random rank order.
      std::vector<std::size_t> kept;
      for (std::size_t c : members)
        if (!concepts_[c].withheld) kept.push_back(c);
      rng_.shuffle(kept);
      for (std::size_t r = 0; r < kept.size(); ++r) {
        const double count = static_cast<double>(cfg_.head_count) /
                             std::pow(static_cast<double>(r + 1), cfg_.zipf_exponent);
        concepts_[kept[r]].train_count =
            std::max(cfg_.min_count, static_cast<std::size_t>(std::llround(count)));
      }
      inventory_.push_back(std::move(entry));
    }

    if (cfg_.noise_entries) {
      // One abbreviation with a single sense, one whose second sense is unknown
      // to the ontology. Neither survives filtering.
      const auto& any = concepts_[rng_.index(concepts_.size())].phrase;
      inventory_.push_back({abbrev_token(), {any}});
      Phrase unknown{abbrev_token() + "ium", abbrev_token() + "ase"};
      inventory_.push_back({abbrev_token(), {concepts_[rng_.index(concepts_.size())].phrase, unknown}});
    }
  }

  void index_phrases() {
    for (std::size_t c = 0; c < concepts_.size(); ++c)
      by_first_[concepts_[c].phrase.front()].push_back(c);
  }

  /// (position, concept) of every concept occurrence in a sentence.
  std::vector<std::pair<std::size_t, std::size_t>> scan(const std::vector<std::string>& s) const {
    std::vector<std::pair<std::size_t, std::size_t>> hits;
    for (std::size_t i = 0; i < s.size(); ++i) {
      auto it = by_first_.find(s[i]);
      if (it == by_first_.end()) continue;
      for (std::size_t c : it->second) {
        const auto& p = concepts_[c].phrase;
        if (i + p.size() <= s.size() &&
            std::equal(p.begin(), p.end(), s.begin() + static_cast<long>(i)))
          hits.emplace_back(i, c);
      }
    }
    return hits;
  }

  const std::string& pick(const std::vector<std::string>& words) {
    return words[rng_.index(words.size())];
  }

  std::vector<std::string> filler(std::size_t main, std::size_t secondary) {
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
      const auto len = static_cast<std::size_t>(rng_.integer(
          static_cast<long long>(cfg_.min_sentence_length), static_cast<long long>(cfg_.max_sentence_length)));
      std::vector<std::string> s;
      for (std::size_t i = 0; i < len; ++i) {
        if (rng_.bernoulli(cfg_.topic_density)) {
          const std::size_t t = rng_.bernoulli(cfg_.secondary_weight) ? secondary : main;
          s.push_back(pick(topics_[t].words));
        } else {
          s.push_back(pick(generic_));
        }
      }
      if (scan(s).empty()) return s;
    }
    throw ConfigError("synth: cannot build a filler sentence free of concept phrases");
  }

  /// Sentence containing exactly one concept occurrence; returns its position.
  std::pair<std::vector<std::string>, std::size_t> mention(std::size_t c) {
    const auto& info = concepts_[c];
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
      const auto len = static_cast<std::size_t>(rng_.integer(
          static_cast<long long>(cfg_.min_sentence_length), static_cast<long long>(cfg_.max_sentence_length)));
      const std::size_t context = std::max<std::size_t>(2, len > info.phrase.size() ? len - info.phrase.size() : 0);
      const bool generic = rng_.bernoulli(cfg_.generic_context_rate);
      std::vector<std::string> ctx;
      bool topical = false;
      for (std::size_t i = 0; i < context; ++i) {
        if (!generic && rng_.bernoulli(cfg_.topic_density)) {
          ctx.push_back(pick(topics_[info.topic].words));
          topical = true;
        } else {
          ctx.push_back(pick(generic_));
        }
      }
      if (!generic && !topical) ctx[rng_.index(ctx.size())] = pick(topics_[info.topic].words);
      const std::size_t pos = rng_.index(context + 1);
      std::vector<std::string> s(ctx.begin(), ctx.begin() + static_cast<long>(pos));
      s.insert(s.end(), info.phrase.begin(), info.phrase.end());
      s.insert(s.end(), ctx.begin() + static_cast<long>(pos), ctx.end());
      const auto hits = scan(s);
      if (hits.size() == 1 && hits[0].first == pos && hits[0].second == c) return {s, pos};
    }
    throw ConfigError("synth: cannot build an unambiguous mention sentence for " + info.id);
  }

  std::vector<std::pair<std::string, std::string>> make_corpus(const std::string& name,
                                                               std::size_t num_docs, bool train,
                                                               std::vector<MentionRecord>& log) {
    struct Doc {
      std::size_t main = 0, secondary = 0;
      std::vector<std::size_t> mentions;  // concept indices
    };
    std::vector<Doc> docs(num_docs);
    std::vector<std::vector<std::size_t>> by_main(cfg_.num_topics), by_secondary(cfg_.num_topics);
    for (std::size_t d = 0; d < num_docs; ++d) {
      docs[d].main = d % cfg_.num_topics;
      docs[d].secondary = (docs[d].main + 1 + rng_.index(cfg_.num_topics - 1)) % cfg_.num_topics;
      by_main[docs[d].main].push_back(d);
      by_secondary[docs[d].secondary].push_back(d);
    }
    for (std::size_t c = 0; c < concepts_.size(); ++c) {
      const std::size_t count = train ? (concepts_[c].withheld ? 0 : concepts_[c].train_count)
                                      : concepts_[c].test_count;
      const std::size_t t = concepts_[c].topic;
      for (std::size_t i = 0; i < count; ++i) {
        const auto& hosts = rng_.bernoulli(cfg_.offtopic_rate) && !by_secondary[t].empty()
                                ? by_secondary[t]
                                : by_main[t];
        docs[hosts[rng_.index(hosts.size())]].mentions.push_back(c);
      }
    }

    std::vector<std::pair<std::string, std::string>> out;
    for (std::size_t d = 0; d < num_docs; ++d) {
      const std::string id = format_id((name + "-").c_str(), d + 1, 5);
      // Slots: npos for filler, otherwise the concept to mention.
      std::vector<std::size_t> slots(cfg_.sentences_per_document, std::string::npos);
      slots.insert(slots.end(), docs[d].mentions.begin(), docs[d].mentions.end());
      rng_.shuffle(slots);
      std::string text;
      std::size_t offset = 0;
      for (std::size_t si = 0; si < slots.size(); ++si) {
        std::vector<std::string> sentence;
        if (slots[si] == std::string::npos) {
          sentence = filler(docs[d].main, docs[d].secondary);
        } else {
          auto [s, pos] = mention(slots[si]);
          sentence = std::move(s);
          log.push_back({name, id, si, offset + pos, concepts_[slots[si]].id});
        }
        for (std::size_t i = 0; i < sentence.size(); ++i) {
          if (i) text += ' ';
          text += sentence[i];
        }
        text += ".\n";
        offset += sentence.size();
      }
      out.emplace_back(id, std::move(text));
    }
    return out;
  }

  const SynthConfig& cfg_;
  Rng rng_;
  std::unordered_set<std::string> used_;
  std::vector<Topic> topics_;
  std::vector<std::string> generic_;
  std::vector<ConceptInfo> concepts_;
  std::vector<AbbrevEntry> inventory_;
  std::unordered_map<std::string, std::vector<std::size_t>> by_first_;
};

}  // namespace

void SynthConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("synth: " + what); };
  if (num_topics < 2) fail("num_topics must be >= 2");
  if (vocab_per_topic < 4) fail("vocab_per_topic must be >= 4");
  if (generic_vocab == 0) fail("generic_vocab must be > 0");
  if (relatives_per_topic == 0) fail("relatives_per_topic must be > 0");
  if (num_abbrevs == 0) fail("num_abbrevs must be > 0");
  if (max_expansions < 2) fail("max_expansions must be >= 2");
  if (max_expansions > num_topics) fail("max_expansions exceeds num_topics");
  if (!(mean_expansions >= 2.0 && mean_expansions <= static_cast<double>(max_expansions)))
    fail("mean_expansions must lie in [2, max_expansions]");
  if (max_expansions == 2 && mean_expansions != 2.0) fail("mean_expansions must be 2 when max_expansions is 2");
  if (!(skew >= 0.0 && skew <= 1.0)) fail("skew must lie in [0, 1]");
  if (train_documents < num_topics || test_documents < num_topics)
    fail("each corpus needs at least one document per topic");
  if (min_sentence_length < 3 || min_sentence_length > max_sentence_length)
    fail("sentence lengths must satisfy 3 <= min <= max");
  if (head_count == 0 || min_count == 0 || relative_count == 0 || test_count == 0)
    fail("mention counts must be positive");
  for (double r : {topic_density, secondary_weight, generic_context_rate, offtopic_rate})
    if (!(r >= 0.0 && r <= 1.0)) fail("rates must lie in [0, 1]");
  if (!(zipf_exponent >= 0.0)) fail("zipf_exponent must be >= 0");
}

SynthBundle generate(const SynthConfig& config) {
  config.validate();
  return Generator(config).run();
}

BundlePaths default_bundle_paths(const std::filesystem::path& dir) {
  return {dir / "train.jsonl",   dir / "test.jsonl",           dir / "ontology.tsv",
          dir / "inventory.tsv", dir / "generation_log.jsonl", dir / "concept_topics.tsv"};
}

void write_bundle(const SynthBundle& bundle, const BundlePaths& paths) {
  write_corpus_jsonl(paths.train_corpus, bundle.train_docs);
  write_corpus_jsonl(paths.test_corpus, bundle.test_docs);
  bundle.ontology.save_tsv(paths.ontology);
  save_inventory_tsv(paths.inventory, bundle.inventory);

  std::string log;
  for (const auto& m : bundle.log) {
    nlohmann::ordered_json j;
    j["corpus"] = m.corpus;
    j["doc_id"] = m.doc_id;
    j["sentence"] = m.sentence;
    j["offset"] = m.offset;
    j["concept_id"] = m.concept_id;
    log += j.dump() + "\n";
  }
  io::write_atomic(paths.log, log);

  const std::set<std::string> withheld(bundle.withheld.begin(), bundle.withheld.end());
  std::string topics;
  for (const auto& [id, topic] : bundle.concept_topics)
    topics += id + "\t" + std::to_string(topic) + "\t" + (withheld.contains(id) ? "1" : "0") + "\n";
  io::write_atomic(paths.topics, topics);
}

std::vector<MentionRecord> read_generation_log(const std::filesystem::path& path) {
  std::vector<MentionRecord> out;
  const auto lines = io::read_lines(path);
  for (std::size_t n = 0; n < lines.size(); ++n) {
    if (lines[n].empty()) continue;
    try {
      const auto j = nlohmann::json::parse(lines[n]);
      out.push_back({j.at("corpus").get<std::string>(), j.at("doc_id").get<std::string>(),
                     j.at("sentence").get<std::size_t>(), j.at("offset").get<std::size_t>(),
                     j.at("concept_id").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string(), n + 1, e.what());
    }
  }
  return out;
}

}  // namespace abbrx
