#include "abbrx/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "abbrx/error.hpp"
#include "abbrx/io.hpp"
#include "abbrx/rng.hpp"

namespace abbrx {

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
    case Split::none: return "none";
  }
  return "none";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "validation") return Split::validation;
  if (s == "test") return Split::test;
  if (s == "none" || s.empty()) return Split::none;
  throw InvalidArgument("unknown split '" + s + "'");
}

std::string to_string(DatasetMode m) {
  switch (m) {
    case DatasetMode::control: return "control";
    case DatasetMode::swr: return "swr";
    case DatasetMode::full: return "full";
  }
  return "control";
}

DatasetMode dataset_mode_from_string(const std::string& s) {
  if (s == "control") return DatasetMode::control;
  if (s == "swr") return DatasetMode::swr;
  if (s == "full") return DatasetMode::full;
  throw ConfigError("unknown dataset mode '" + s + "' (expected control, swr or full)");
}

void SamplingConfig::validate() const {
  if (!(temperature > 0.0) || !std::isfinite(temperature))
    throw ConfigError("sampling temperature must be > 0");
  if (!(epsilon >= 0.0)) throw ConfigError("sampling epsilon must be >= 0");
  if (k == 0) throw ConfigError("sampling k must be > 0");
  if (cap == 0) throw ConfigError("sampling cap must be > 0");
}

void check_sample(const LabeledSample& s) {
  if (s.abbrev_index >= s.tokens.size() || s.tokens[s.abbrev_index] != s.abbrev)
    throw InvalidArgument("sample window does not hold '" + s.abbrev + "' at its recorded index");
  if (s.label.empty()) throw InvalidArgument("sample has an empty label");
}

std::vector<LabeledSample> DatasetSplit::all() const {
  std::vector<LabeledSample> out;
  out.reserve(size());
  out.insert(out.end(), train.begin(), train.end());
  out.insert(out.end(), validation.begin(), validation.end());
  out.insert(out.end(), test.begin(), test.end());
  return out;
}

LabeledSample reverse_substitute(const Corpus& corpus, const Occurrence& occurrence,
                                 const Phrase& phrase, const std::string& abbrev,
                                 const std::string& label, std::size_t window,
                                 SampleSource source, const std::string& source_concept) {
  if (occurrence.doc >= corpus.size()) throw InvalidArgument("occurrence document out of range");
  const auto& doc = corpus[occurrence.doc];
  if (occurrence.sentence >= doc.sentences.size())
    throw InvalidArgument("occurrence sentence out of range");
  const auto bounds = doc.sentences[occurrence.sentence];
  if (phrase.empty() || occurrence.offset < bounds.begin ||
      occurrence.offset + phrase.size() > bounds.end ||
      !std::equal(phrase.begin(), phrase.end(),
                  doc.tokens.begin() + static_cast<long>(occurrence.offset)))
    throw InvalidArgument("occurrence in '" + doc.id + "' does not match phrase '" +
                          phrase_to_string(phrase) + "'");

  const std::size_t left_begin =
      occurrence.offset - std::min(window, occurrence.offset - bounds.begin);
  const std::size_t right_begin = occurrence.offset + phrase.size();
  const std::size_t right_end = right_begin + std::min(window, bounds.end - right_begin);

  LabeledSample s;
  s.abbrev = abbrev;
  s.tokens.assign(doc.tokens.begin() + static_cast<long>(left_begin),
                  doc.tokens.begin() + static_cast<long>(occurrence.offset));
  s.abbrev_index = s.tokens.size();
  s.tokens.push_back(abbrev);
  s.tokens.insert(s.tokens.end(), doc.tokens.begin() + static_cast<long>(right_begin),
                  doc.tokens.begin() + static_cast<long>(right_end));
  s.doc_id = doc.id;
  s.label = label;
  s.source = source;
  s.source_concept = source_concept;
  s.doc_span = std::make_pair(occurrence.offset, phrase.size());
  return s;
}

std::vector<double> sampling_distribution(std::span<const double> distances, double temperature) {
  if (!(temperature > 0.0)) throw InvalidArgument("sampling_distribution: temperature must be > 0");
  if (distances.empty()) throw InvalidArgument("sampling_distribution: no relatives");
  // exp(-d/T) is largest at the smallest distance; subtract that exponent.
  const double dmin = *std::min_element(distances.begin(), distances.end());
  std::vector<double> p(distances.size());
  double z = 0.0;
  for (std::size_t i = 0; i < distances.size(); ++i) {
    p[i] = std::exp(-(distances[i] - dmin) / temperature);
    z += p[i];
  }
  for (auto& x : p) x /= z;
  return p;
}

std::vector<double> sampling_distribution(const RelativeSet& relatives, double temperature) {
  std::vector<double> d;
  d.reserve(relatives.relatives.size());
  for (const auto& r : relatives.relatives) d.push_back(r.distance);
  return sampling_distribution(d, temperature);
}

DatasetSplit split_dataset(std::vector<LabeledSample> samples, std::uint64_t seed) {
  std::vector<std::string> labels;
  std::map<std::string, std::vector<LabeledSample>> by_label;
  for (auto& s : samples) {
    if (!by_label.contains(s.label)) labels.push_back(s.label);
    by_label[s.label].push_back(std::move(s));
  }
  DatasetSplit split;
  for (const auto& label : labels) {
    auto& group = by_label[label];
    if (group.size() < 5)
      spdlog::warn("label '{}' has only {} samples; split will be thin", label, group.size());
    Rng rng(derive_seed(seed, "split:" + label));
    rng.shuffle(group);
    const std::size_t n = group.size();
    std::size_t n_train = static_cast<std::size_t>(std::floor(0.6 * static_cast<double>(n) + 0.5));
    std::size_t n_val = static_cast<std::size_t>(std::floor(0.2 * static_cast<double>(n) + 0.5));
    if (n_train + n_val > n) n_val = n - n_train;
    for (std::size_t i = 0; i < n; ++i) {
      auto& s = group[i];
      if (i < n_train) {
        s.split = Split::train;
        split.train.push_back(std::move(s));
      } else if (i < n_train + n_val) {
        s.split = Split::validation;
        split.validation.push_back(std::move(s));
      } else {
        s.split = Split::test;
        split.test.push_back(std::move(s));
      }
    }
  }
  return split;
}

TrainingSet build_training_set(const AbbrevEntry& entry, DatasetMode mode,
                               std::span<const RelativeSet> relative_sets,
                               const PhraseIndex& phrase_index, const Corpus& corpus,
                               const SamplingConfig& config) {
  config.validate();
  if (mode == DatasetMode::full && relative_sets.size() != entry.expansions.size())
    throw InvalidArgument("full mode needs one relative set per expansion of '" + entry.abbrev + "'");
  const std::uint64_t seed = derive_seed(config.seed, entry.abbrev);

  TrainingSet result;
  std::vector<std::vector<LabeledSample>> per_label;

  for (std::size_t e = 0; e < entry.expansions.size(); ++e) {
    const Phrase& expansion = entry.expansions[e];
    const std::string label = phrase_to_string(expansion);
    Rng rng(derive_seed(seed, to_string(mode) + ":" + label));
    std::vector<LabeledSample> samples;

    if (mode == DatasetMode::full) {
      struct Usable {
        const Relative* rel;
        std::span<const Occurrence> occ;
      };
      std::vector<Usable> usable;
      std::vector<double> distances;
      for (const auto& r : relative_sets[e].relatives) {
        auto occ = phrase_index.occurrences(r.phrase);
        if (occ.empty()) continue;
        usable.push_back({&r, occ});
        distances.push_back(r.distance);
      }
      if (!usable.empty()) {
        const auto p = sampling_distribution(distances, config.temperature);
        for (std::size_t draw = 0; draw < config.cap; ++draw) {
          const auto& u = usable[rng.categorical(p)];
          const auto& occ = u.occ[rng.index(u.occ.size())];
          samples.push_back(reverse_substitute(
              corpus, occ, u.rel->phrase, entry.abbrev, label, config.window,
              u.rel->is_self ? SampleSource::expansion : SampleSource::relative,
              u.rel->is_self ? std::string() : u.rel->concept_id));
        }
      }
    } else {
      std::vector<Occurrence> occ(phrase_index.occurrences(expansion).begin(),
                                  phrase_index.occurrences(expansion).end());
      if (occ.size() > config.cap) {
        rng.shuffle(occ);
        occ.resize(config.cap);
        std::sort(occ.begin(), occ.end());
      }
      for (const auto& o : occ)
        samples.push_back(reverse_substitute(corpus, o, expansion, entry.abbrev, label,
                                             config.window));
    }

    if (samples.empty()) {
      spdlog::warn("'{}': expansion '{}' has no {} data and is dropped", entry.abbrev, label,
                   mode == DatasetMode::full ? "expansion or relative" : "reverse-substitution");
      result.dropped.push_back(label);
      continue;
    }
    result.labels.push_back(label);
    per_label.push_back(std::move(samples));
  }

  if (mode == DatasetMode::swr && !per_label.empty()) {
    std::size_t target = 0;
    for (const auto& s : per_label) target = std::max(target, s.size());
    for (std::size_t i = 0; i < per_label.size(); ++i) {
      auto& s = per_label[i];
      Rng rng(derive_seed(seed, "swr:" + result.labels[i]));
      const std::size_t original = s.size();
      while (s.size() < target) s.push_back(s[rng.index(original)]);
    }
  }

  std::vector<LabeledSample> all;
  for (auto& s : per_label) all.insert(all.end(), std::make_move_iterator(s.begin()),
                                       std::make_move_iterator(s.end()));
  result.split = split_dataset(std::move(all), seed);
  return result;
}

void write_dataset_jsonl(const std::filesystem::path& path, std::span<const LabeledSample> samples) {
  std::string out;
  for (const auto& s : samples) {
    nlohmann::json j = {{"abbrev", s.abbrev},
                        {"tokens", s.tokens},
                        {"abbrev_index", s.abbrev_index},
                        {"doc_id", s.doc_id},
                        {"label", s.label},
                        {"source", s.source == SampleSource::expansion
                                       ? std::string("expansion")
                                       : "relative:" + s.source_concept},
                        {"split", to_string(s.split)}};
    if (s.doc_span) j["doc_span"] = {s.doc_span->first, s.doc_span->second};
    out += j.dump();
    out.push_back('\n');
  }
  io::write_atomic(path, out);
}

std::vector<LabeledSample> read_dataset_jsonl(const std::filesystem::path& path) {
  std::vector<LabeledSample> samples;
  const auto lines = io::read_lines(path);
  for (std::size_t n = 0; n < lines.size(); ++n) {
    if (lines[n].empty()) continue;
    try {
      const auto j = nlohmann::json::parse(lines[n]);
      LabeledSample s;
      s.abbrev = j.at("abbrev").get<std::string>();
      s.tokens = j.at("tokens").get<std::vector<std::string>>();
      s.abbrev_index = j.at("abbrev_index").get<std::size_t>();
      s.doc_id = j.at("doc_id").get<std::string>();
      s.label = j.at("label").get<std::string>();
      const auto source = j.value("source", std::string("expansion"));
      if (source == "expansion") {
        s.source = SampleSource::expansion;
      } else if (source.rfind("relative:", 0) == 0) {
        s.source = SampleSource::relative;
        s.source_concept = source.substr(9);
      } else {
        throw InvalidArgument("unknown source '" + source + "'");
      }
      s.split = split_from_string(j.value("split", std::string("none")));
      if (j.contains("doc_span")) {
        const auto& span = j.at("doc_span");
        s.doc_span = std::make_pair(span.at(0).get<std::size_t>(), span.at(1).get<std::size_t>());
      }
      check_sample(s);
      samples.push_back(std::move(s));
    } catch (const std::exception& e) {
      throw ParseError(path.string(), n + 1, e.what());
    }
  }
  return samples;
}

DatasetSplit regroup(std::span<const LabeledSample> samples) {
  DatasetSplit split;
  for (const auto& s : samples) {
    switch (s.split) {
      case Split::train: split.train.push_back(s); break;
      case Split::validation: split.validation.push_back(s); break;
      default: split.test.push_back(s); break;
    }
  }
  return split;
}

}  // namespace abbrx
