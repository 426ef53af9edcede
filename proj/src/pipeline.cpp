#include "abbrx/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <thread>
#include <type_traits>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "abbrx/error.hpp"
#include "abbrx/io.hpp"
#include "abbrx/rng.hpp"

namespace abbrx {
namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

// Field lists shared by the reader and the writer.
template <class V, class C>
void synth_fields(V& v, C& c) {
  v("num_topics", c.num_topics);
  v("vocab_per_topic", c.vocab_per_topic);
  v("generic_vocab", c.generic_vocab);
  v("relatives_per_topic", c.relatives_per_topic);
  v("num_abbrevs", c.num_abbrevs);
  v("mean_expansions", c.mean_expansions);
  v("max_expansions", c.max_expansions);
  v("skew", c.skew);
  v("train_documents", c.train_documents);
  v("test_documents", c.test_documents);
  v("sentences_per_document", c.sentences_per_document);
  v("min_sentence_length", c.min_sentence_length);
  v("max_sentence_length", c.max_sentence_length);
  v("head_count", c.head_count);
  v("zipf_exponent", c.zipf_exponent);
  v("min_count", c.min_count);
  v("relative_count", c.relative_count);
  v("test_count", c.test_count);
  v("test_relative_count", c.test_relative_count);
  v("topic_density", c.topic_density);
  v("secondary_weight", c.secondary_weight);
  v("generic_context_rate", c.generic_context_rate);
  v("offtopic_rate", c.offtopic_rate);
  v("noise_entries", c.noise_entries);
}

template <class V, class C>
void embedding_fields(V& v, C& c) {
  v("dim", c.dim);
  v("min_ngram", c.min_ngram);
  v("max_ngram", c.max_ngram);
  v("bucket_count", c.bucket_count);
  v("window", c.window);
  v("negative_samples", c.negative_samples);
  v("epochs", c.epochs);
  v("learning_rate", c.learning_rate);
  v("min_count", c.min_count);
}

template <class V, class C>
void sampling_fields(V& v, C& c) {
  v("temperature", c.temperature);
  v("epsilon", c.epsilon);
  v("k", c.k);
  v("cap", c.cap);
  v("window", c.window);
}

template <class V, class C>
void tpe_fields(V& v, C& c) {
  v("lower", c.lower);
  v("upper", c.upper);
  v("iterations", c.iterations);
  v("startup_trials", c.startup_trials);
  v("gamma", c.gamma);
  v("candidates", c.candidates);
  v("log_scale", c.log_scale);
}

template <class V, class C>
void model_fields(V& v, C& c) {
  v("conv_dim", c.conv_dim);
  v("out_dim", c.out_dim);
  v("learning_rate", c.learning_rate);
  v("max_epochs", c.max_epochs);
  v("patience", c.patience);
  v("min_delta", c.min_delta);
  v("batch_size", c.batch_size);
  v("freeze_h", c.freeze_h);
  v("optimizer", c.optimizer);
}

class Reader {
 public:
  Reader(const nlohmann::json& j, std::string section) : j_(j), section_(std::move(section)) {
    if (!j_.is_object()) throw ConfigError("config: '" + section_ + "' must be an object");
    for (auto it = j_.begin(); it != j_.end(); ++it) unused_.insert(it.key());
  }

  template <class T>
  void operator()(const char* key, T& out) {
    auto it = j_.find(key);
    if (it == j_.end()) return;
    unused_.erase(key);
    try {
      if constexpr (std::is_same_v<T, Optimizer>) {
        out = optimizer_from_string(it->template get<std::string>());
      } else if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
        if (!it->is_number_unsigned())
          throw ConfigError("must be a non-negative integer");
        out = it->template get<T>();
      } else {
        out = it->template get<T>();
      }
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config: " + section_ + "." + key + ": " + e.what());
    } catch (const Error& e) {
      throw ConfigError("config: " + section_ + "." + key + ": " + e.what());
    }
  }

  void skip(const char* key) { unused_.erase(key); }

  void finish() const {
    if (!unused_.empty()) throw ConfigError("config: unknown key '" + section_ + "." + *unused_.begin() + "'");
  }

 private:
  const nlohmann::json& j_;
  std::string section_;
  std::set<std::string> unused_;
};

struct Writer {
  ojson j = ojson::object();
  template <class T>
  void operator()(const char* key, const T& v) {
    if constexpr (std::is_same_v<T, Optimizer>)
      j[key] = to_string(v);
    else
      j[key] = v;
  }
};

template <class C, class F>
void read_section(const nlohmann::json& root, const char* name, C& c, F fields) {
  auto it = root.find(name);
  if (it == root.end()) return;
  Reader r(*it, name);
  fields(r, c);
  r.finish();
}

template <class C, class F>
ojson write_section(const C& c, F fields) {
  Writer w;
  fields(w, c);
  return w.j;
}

ojson canonical(const PipelineConfig& c, bool with_paths) {
  ojson j;
  j["seed"] = c.seed;
  j["mode"] = to_string(c.mode);
  j["use_global"] = c.use_global;
  j["jobs"] = c.jobs;
  j["abbrevs"] = c.abbrevs;
  j["tpe_inner_epochs"] = c.tpe_inner_epochs;
  if (with_paths) {
    ojson p;
    p["train_corpus"] = c.paths.train_corpus.string();
    p["test_corpus"] = c.paths.test_corpus.string();
    p["ontology"] = c.paths.ontology.string();
    p["inventory"] = c.paths.inventory.string();
    p["gold_labels"] = c.paths.gold_labels.string();
    p["output_dir"] = c.paths.output_dir.string();
    j["paths"] = std::move(p);
  }
  j["synth"] = write_section(c.synth, [](auto& v, auto& x) { synth_fields(v, x); });
  j["embedding"] = write_section(c.embedding, [](auto& v, auto& x) { embedding_fields(v, x); });
  j["sampling"] = write_section(c.sampling, [](auto& v, auto& x) { sampling_fields(v, x); });
  j["tpe"] = write_section(c.tpe, [](auto& v, auto& x) { tpe_fields(v, x); });
  j["model"] = write_section(c.model, [](auto& v, auto& x) { model_fields(v, x); });
  return j;
}

fs::path synth_dir(const PipelineConfig& c) { return c.paths.output_dir / "data"; }

void update_manifest(const PipelineConfig& config, const std::string& step) {
  const Layout layout{config.paths.output_dir};
  ojson m;
  std::error_code ec;
  if (fs::exists(layout.manifest(), ec)) {
    try {
      m = ojson::parse(io::read_file(layout.manifest()));
    } catch (const std::exception&) {
      m = ojson();  // unreadable manifest: start over
    }
  }
  if (!m.is_object()) m = ojson::object();
  m["tool"] = "abbrx";
  m["version"] = kVersion;
  m["formats"] = {{"model", 1}, {"subwords", 1}, {"dataset", 1}};
  ojson entry;
  entry["config_hash"] = config_hash(config);
  entry["seed"] = config.seed;
  entry["config"] = canonical(config, true);
  m["steps"][step] = std::move(entry);
  io::write_atomic(layout.manifest(), m.dump(2) + "\n");
}

std::vector<AbbrevEntry> selected_entries(const PipelineConfig& c, const Ontology& ontology) {
  auto entries = filter_abbrevs(load_inventory_tsv(c.paths.inventory), ontology);
  if (c.abbrevs.empty()) return entries;
  std::vector<AbbrevEntry> out;
  for (const auto& a : c.abbrevs) {
    auto it = std::find_if(entries.begin(), entries.end(),
                           [&](const AbbrevEntry& e) { return e.abbrev == a; });
    if (it == entries.end())
      throw InvalidArgument("abbreviation '" + a + "' is not in the filtered inventory");
    out.push_back(*it);
  }
  return out;
}

ModelConfig model_config(const PipelineConfig& c, const std::string& abbrev) {
  ModelConfig m = c.model;
  m.seed = derive_seed(c.model.seed, abbrev);
  return m;
}

std::set<Phrase> expansion_phrases(std::span<const AbbrevEntry> entries) {
  std::set<Phrase> out;
  for (const auto& e : entries) out.insert(e.expansions.begin(), e.expansions.end());
  return out;
}

double best_validation_loss(const DisambiguationModel& m) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& row : m.training_log()) best = std::min(best, row.validation_loss);
  return best;
}

ojson relatives_json(const AbbrevEntry& entry, std::span<const RelativeSet> sets) {
  ojson out = ojson::array();
  for (const auto& rs : sets) {
    ojson rows = ojson::array();
    for (const auto& r : rs.relatives) {
      ojson row;
      row["concept_id"] = r.concept_id;
      row["phrase"] = phrase_to_string(r.phrase);
      row["distance"] = r.distance;
      row["is_self"] = r.is_self;
      // Another sense of the same abbreviation among the neighbours.
      row["other_expansion"] =
          !r.is_self && std::find(entry.expansions.begin(), entry.expansions.end(), r.phrase) !=
                            entry.expansions.end();
      rows.push_back(std::move(row));
    }
    ojson e;
    e["expansion"] = phrase_to_string(rs.expansion);
    e["relatives"] = std::move(rows);
    out.push_back(std::move(e));
  }
  return out;
}

struct DatasetMeta {
  std::vector<std::string> labels;
  std::vector<std::string> dropped;
};

DatasetMeta read_meta(const fs::path& path) {
  try {
    const auto j = nlohmann::json::parse(io::read_file(path));
    return {j.at("labels").get<std::vector<std::string>>(),
            j.at("dropped").get<std::vector<std::string>>()};
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string(), 0, e.what());
  }
}

}  // namespace

// ---- config ---------------------------------------------------------------

PipelineConfig PipelineConfig::resolved() const {
  PipelineConfig c = *this;
  c.synth.seed = derive_seed(seed, "synth");
  c.embedding.seed = derive_seed(seed, "embeddings");
  c.sampling.seed = derive_seed(seed, "sampling");
  c.tpe.seed = derive_seed(seed, "tpe");
  c.model.seed = derive_seed(seed, "model");
  c.model.window = c.sampling.window;
  c.model.embed_dim = static_cast<std::size_t>(std::max(c.embedding.dim, 0));
  c.model.use_global = c.use_global;
  const auto bundle = default_bundle_paths(synth_dir(c));
  if (c.paths.train_corpus.empty()) c.paths.train_corpus = bundle.train_corpus;
  if (c.paths.test_corpus.empty()) c.paths.test_corpus = bundle.test_corpus;
  if (c.paths.ontology.empty()) c.paths.ontology = bundle.ontology;
  if (c.paths.inventory.empty()) c.paths.inventory = bundle.inventory;
  return c;
}

void PipelineConfig::validate() const {
  if (paths.output_dir.empty()) throw ConfigError("config: paths.output_dir is empty");
  if (jobs == 0) throw ConfigError("config: jobs must be >= 1");
  if (tpe_inner_epochs == 0) throw ConfigError("config: tpe_inner_epochs must be >= 1");
  synth.validate();
  embedding.validate();
  sampling.validate();
  tpe.validate();
  model.validate();
  if (model.embed_dim != static_cast<std::size_t>(embedding.dim))
    throw ConfigError("config: model embed_dim differs from embedding dim");
}

PipelineConfig pipeline_config_from_json(const std::string& text, const fs::path& base_dir) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  PipelineConfig c;
  Reader top(j, "config");
  std::string mode = to_string(c.mode);
  top("seed", c.seed);
  top("mode", mode);
  top("use_global", c.use_global);
  top("jobs", c.jobs);
  top("abbrevs", c.abbrevs);
  top("tpe_inner_epochs", c.tpe_inner_epochs);
  for (const char* section : {"paths", "synth", "embedding", "sampling", "tpe", "model"})
    top.skip(section);  // read below
  top.finish();
  try {
    c.mode = dataset_mode_from_string(mode);
  } catch (const Error& e) {
    throw ConfigError(std::string("config: mode: ") + e.what());
  }

  if (auto it = j.find("paths"); it != j.end()) {
    Reader r(*it, "paths");
    std::string train, test, onto, inv, gold, out;
    r("train_corpus", train);
    r("test_corpus", test);
    r("ontology", onto);
    r("inventory", inv);
    r("gold_labels", gold);
    r("output_dir", out);
    r.finish();
    auto resolve = [&](const std::string& s) -> fs::path {
      if (s.empty()) return {};
      fs::path p(s);
      return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
    };
    c.paths.train_corpus = resolve(train);
    c.paths.test_corpus = resolve(test);
    c.paths.ontology = resolve(onto);
    c.paths.inventory = resolve(inv);
    c.paths.gold_labels = resolve(gold);
    if (!out.empty()) c.paths.output_dir = resolve(out);
  }
  read_section(j, "synth", c.synth, [](auto& v, auto& x) { synth_fields(v, x); });
  read_section(j, "embedding", c.embedding, [](auto& v, auto& x) { embedding_fields(v, x); });
  read_section(j, "sampling", c.sampling, [](auto& v, auto& x) { sampling_fields(v, x); });
  read_section(j, "tpe", c.tpe, [](auto& v, auto& x) { tpe_fields(v, x); });
  read_section(j, "model", c.model, [](auto& v, auto& x) { model_fields(v, x); });
  return c;
}

PipelineConfig load_pipeline_config(const fs::path& path) {
  return pipeline_config_from_json(io::read_file(path), path.parent_path());
}

std::string pipeline_config_to_json(const PipelineConfig& config) {
  return canonical(config, true).dump(2) + "\n";
}

std::string config_hash(const PipelineConfig& config) {
  // Paths are recorded in the manifest but do not change results.
  const auto text = canonical(config.resolved(), false).dump();
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(stable_hash(text)));
  return buf;
}

std::string sanitize_name(const std::string& abbrev) {
  std::string out;
  for (unsigned char ch : abbrev) {
    if ((ch >= 'a' && ch <= 'z') || (ch >= '0' && ch <= '9') || ch == '_') {
      out.push_back(static_cast<char>(ch));
    } else {
      char buf[4];
      std::snprintf(buf, sizeof buf, "%%%02X", ch);
      out += buf;
    }
  }
  return out.empty() ? "%" : out;
}

std::string model_name(DatasetMode mode, bool use_global) {
  return to_string(mode) + (use_global ? "-global" : "-local");
}

std::string to_string(LabelSource s) {
  switch (s) {
    case LabelSource::rs: return "rs";
    case LabelSource::gold: return "gold";
    case LabelSource::heldout: return "heldout";
  }
  return "rs";
}

LabelSource label_source_from_string(const std::string& s) {
  if (s == "rs") return LabelSource::rs;
  if (s == "gold") return LabelSource::gold;
  if (s == "heldout") return LabelSource::heldout;
  throw InvalidArgument("unknown label source '" + s + "' (expected rs, gold or heldout)");
}

fs::path Layout::dataset_dir(DatasetMode mode, const std::string& abbrev) const {
  return root / "datasets" / to_string(mode) / sanitize_name(abbrev);
}

fs::path Layout::model_file(DatasetMode mode, bool use_global, const std::string& abbrev) const {
  return root / "models" / model_name(mode, use_global) / sanitize_name(abbrev) / "model.json";
}

fs::path Layout::metrics_file(const std::string& model, LabelSource labels) const {
  return root / "metrics" / (model + "-" + to_string(labels) + ".json");
}

fs::path Layout::predictions_file(const std::string& model, LabelSource labels) const {
  return root / "metrics" / (model + "-" + to_string(labels) + ".predictions.jsonl");
}

// ---- helpers --------------------------------------------------------------

void parallel_for(std::size_t n, std::size_t jobs,
                  const std::function<void(std::size_t, std::size_t)>& fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i, 0);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < jobs; ++w)
    pool.emplace_back([&, w] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i, w);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// ---- commands -------------------------------------------------------------

void run_synth_gen(const PipelineConfig& raw) {
  const auto c = raw.resolved();
  c.validate();
  spdlog::info("generating synthetic bundle ({} abbreviations, skew {})", c.synth.num_abbrevs,
               c.synth.skew);
  const auto bundle = generate(c.synth);
  BundlePaths paths{c.paths.train_corpus, c.paths.test_corpus, c.paths.ontology, c.paths.inventory,
                    c.paths.train_corpus.parent_path() / "generation_log.jsonl",
                    c.paths.train_corpus.parent_path() / "concept_topics.tsv"};
  write_bundle(bundle, paths);
  update_manifest(c, "synth-gen");
}

void run_train_embeddings(const PipelineConfig& raw) {
  const auto c = raw.resolved();
  c.validate();
  const Layout layout{c.paths.output_dir};
  const auto corpus = Corpus::load_jsonl(c.paths.train_corpus);
  const auto ontology = Ontology::load_tsv(c.paths.ontology);
  const auto joined = join_known_phrases(corpus, concept_phrases(ontology));
  spdlog::info("training embeddings on {} documents (dim {})", joined.size(), c.embedding.dim);
  const auto model = train_embeddings(joined, c.embedding);
  model.save(layout.embeddings());
  compute_idf(corpus).save_tsv(layout.idf());
  update_manifest(c, "train-embeddings");
}

void run_build_dataset(const PipelineConfig& raw) {
  const auto c = raw.resolved();
  c.validate();
  const Layout layout{c.paths.output_dir};
  const auto corpus = Corpus::load_jsonl(c.paths.train_corpus);
  const auto ontology = Ontology::load_tsv(c.paths.ontology);
  const auto entries = selected_entries(c, ontology);
  const auto embeddings = EmbeddingModel::load(layout.embeddings());
  const auto idf = IdfTable::load_tsv(layout.idf());
  if (embeddings.dim() != c.embedding.dim)
    throw ConfigError("config: embedding dim differs from the trained embeddings");

  auto phrases = concept_phrases(ontology);
  const auto exps = expansion_phrases(entries);
  phrases.insert(exps.begin(), exps.end());
  const TokenIndex tokens(corpus);
  const auto index = build_phrase_index(tokens, phrases);
  const bool full = c.mode == DatasetMode::full;
  std::optional<CandidatePool> pool;
  if (full) pool.emplace(ontology, embeddings, index);

  std::vector<std::unique_ptr<FeatureExtractor>> features;
  for (std::size_t w = 0; w < std::max<std::size_t>(1, c.jobs); ++w)
    features.push_back(std::make_unique<FeatureExtractor>(embeddings, &corpus, &idf));

  spdlog::info("building {} datasets for {} abbreviations", to_string(c.mode), entries.size());
  parallel_for(entries.size(), c.jobs, [&](std::size_t i, std::size_t worker) {
    const auto& entry = entries[i];
    std::vector<RelativeSet> relatives;
    if (full)
      for (const auto& e : entry.expansions)
        relatives.push_back(nearest_relatives(e, embeddings, *pool, index.count(e) > 0,
                                              c.sampling.k, c.sampling.epsilon));

    SamplingConfig sampling = c.sampling;
    std::optional<OptimizationResult> search;
    auto set = build_training_set(entry, c.mode, relatives, index, corpus, sampling);
    if (full && set.labels.size() >= 2) {
      TpeConfig tpe = c.tpe;
      tpe.seed = derive_seed(c.tpe.seed, entry.abbrev);
      ModelConfig inner = model_config(c, entry.abbrev);
      inner.max_epochs = c.tpe_inner_epochs;
      auto objective = [&](double t) {
        SamplingConfig s = c.sampling;
        s.temperature = t;
        const auto trial = build_training_set(entry, c.mode, relatives, index, corpus, s);
        if (trial.labels.size() < 2 || trial.split.validation.empty())
          return std::numeric_limits<double>::infinity();
        return best_validation_loss(
            train(entry.abbrev, trial.split, trial.labels, *features[worker], inner));
      };
      search = optimize_temperature(objective, tpe);
      sampling.temperature = search->best_value;
      set = build_training_set(entry, c.mode, relatives, index, corpus, sampling);
      spdlog::debug("{}: T = {:.4f} (validation loss {:.4f})", entry.abbrev, search->best_value,
                    search->best_objective);
    }

    const auto dir = layout.dataset_dir(c.mode, entry.abbrev);
    write_dataset_jsonl(dir / "dataset.jsonl", set.split.all());
    ojson meta;
    meta["abbrev"] = entry.abbrev;
    meta["mode"] = to_string(c.mode);
    meta["labels"] = set.labels;
    meta["dropped"] = set.dropped;
    meta["temperature"] = search ? ojson(sampling.temperature) : ojson(nullptr);
    meta["sizes"] = {{"train", set.split.train.size()},
                     {"validation", set.split.validation.size()},
                     {"test", set.split.test.size()}};
    io::write_atomic(dir / "meta.json", meta.dump(2) + "\n");
    if (full) {
      io::write_atomic(dir / "relatives.json", relatives_json(entry, relatives).dump(2) + "\n");
      io::write_atomic(dir / "temperature.jsonl",
                       search ? trials_to_jsonl(entry.abbrev, search->trials) : std::string());
    }
  });
  update_manifest(c, "build-dataset:" + to_string(c.mode));
}

void run_train(const PipelineConfig& raw) {
  const auto c = raw.resolved();
  c.validate();
  const Layout layout{c.paths.output_dir};
  const auto corpus = Corpus::load_jsonl(c.paths.train_corpus);
  const auto ontology = Ontology::load_tsv(c.paths.ontology);
  const auto entries = selected_entries(c, ontology);
  const auto embeddings = EmbeddingModel::load(layout.embeddings());
  const auto idf = IdfTable::load_tsv(layout.idf());

  std::vector<std::unique_ptr<FeatureExtractor>> features;
  for (std::size_t w = 0; w < std::max<std::size_t>(1, c.jobs); ++w)
    features.push_back(std::make_unique<FeatureExtractor>(embeddings, &corpus, &idf));

  spdlog::info("training {} models for {} abbreviations", model_name(c.mode, c.use_global),
               entries.size());
  parallel_for(entries.size(), c.jobs, [&](std::size_t i, std::size_t worker) {
    const auto& entry = entries[i];
    const auto dir = layout.dataset_dir(c.mode, entry.abbrev);
    const auto meta = read_meta(dir / "meta.json");
    const auto out = layout.model_file(c.mode, c.use_global, entry.abbrev);
    const auto config = model_config(c, entry.abbrev);
    if (meta.labels.empty()) {
      spdlog::warn("{}: no expansion has data; no model written", entry.abbrev);
      std::error_code ec;
      fs::remove(out, ec);
      return;
    }
    if (meta.labels.size() == 1) {
      DisambiguationModel::constant(entry.abbrev, meta.labels[0], config).save(out);
      return;
    }
    const auto split = regroup(read_dataset_jsonl(dir / "dataset.jsonl"));
    train(entry.abbrev, split, meta.labels, *features[worker], config).save(out);
  });
  update_manifest(c, "train:" + model_name(c.mode, c.use_global));
}

ModelMetrics run_evaluate(const PipelineConfig& raw, LabelSource labels) {
  const auto c = raw.resolved();
  c.validate();
  const Layout layout{c.paths.output_dir};
  const auto ontology = Ontology::load_tsv(c.paths.ontology);
  const auto entries = selected_entries(c, ontology);
  const auto embeddings = EmbeddingModel::load(layout.embeddings());
  const auto idf = IdfTable::load_tsv(layout.idf());
  const Corpus corpus = Corpus::load_jsonl(labels == LabelSource::heldout ? c.paths.train_corpus
                                                                          : c.paths.test_corpus);

  // Samples per entry.
  std::vector<std::vector<LabeledSample>> samples(entries.size());
  if (labels == LabelSource::rs) {
    const auto index = build_phrase_index(corpus, expansion_phrases(entries));
    for (std::size_t i = 0; i < entries.size(); ++i)
      for (const auto& e : entries[i].expansions)
        for (const auto& occ : index.occurrences(e))
          samples[i].push_back(reverse_substitute(corpus, occ, e, entries[i].abbrev,
                                                  phrase_to_string(e), c.sampling.window));
  } else if (labels == LabelSource::heldout) {
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const auto file = layout.dataset_dir(c.mode, entries[i].abbrev) / "dataset.jsonl";
      for (auto& s : read_dataset_jsonl(file))
        if (s.split == Split::test) samples[i].push_back(std::move(s));
    }
  } else {
    if (c.paths.gold_labels.empty()) throw ConfigError("config: paths.gold_labels is not set");
    std::map<std::string, std::size_t> slot;
    for (std::size_t i = 0; i < entries.size(); ++i) slot[entries[i].abbrev] = i;
    for (auto& s : read_dataset_jsonl(c.paths.gold_labels))
      if (auto it = slot.find(s.abbrev); it != slot.end()) samples[it->second].push_back(std::move(s));
  }

  std::vector<AbbrevResult> results(entries.size());
  std::vector<std::unique_ptr<FeatureExtractor>> features;
  for (std::size_t w = 0; w < std::max<std::size_t>(1, c.jobs); ++w)
    features.push_back(std::make_unique<FeatureExtractor>(embeddings, &corpus, &idf));
  parallel_for(entries.size(), c.jobs, [&](std::size_t i, std::size_t worker) {
    const auto& entry = entries[i];
    auto& r = results[i];
    r.abbrev = entry.abbrev;
    r.num_expansions = entry.expansions.size();
    const auto file = layout.model_file(c.mode, c.use_global, entry.abbrev);
    std::optional<DisambiguationModel> model;
    if (fs::exists(file)) model = DisambiguationModel::load(file);
    for (const auto& s : samples[i]) {
      std::string predicted;  // no model: every sample counts as wrong
      if (model) predicted = model->predict_label(features[worker]->extract(s, model->config().use_global));
      r.pairs.push_back({std::move(predicted), s.label});
    }
  });

  const auto name = model_name(c.mode, c.use_global);
  auto metrics = summarize(name, results, derive_seed(c.seed, "bootstrap"));
  io::write_atomic(layout.metrics_file(name, labels), metrics_to_json(metrics));
  std::string preds;
  for (std::size_t i = 0; i < entries.size(); ++i)
    for (std::size_t k = 0; k < results[i].pairs.size(); ++k) {
      ojson j;
      j["abbrev"] = entries[i].abbrev;
      j["doc_id"] = samples[i][k].doc_id;
      j["truth"] = results[i].pairs[k].truth;
      j["predicted"] = results[i].pairs[k].predicted;
      preds += j.dump() + "\n";
    }
  io::write_atomic(layout.predictions_file(name, labels), preds);
  update_manifest(c, "evaluate:" + name + ":" + to_string(labels));
  spdlog::info("{} on {}: macro {:.4f}, micro {:.4f}", name, to_string(labels), metrics.macro,
               metrics.micro);
  return metrics;
}

ComparisonReport run_compare(std::span<const fs::path> metrics_files, const fs::path& out_dir) {
  if (metrics_files.size() < 2) throw InvalidArgument("compare needs at least two metrics files");
  std::vector<ModelMetrics> models;
  for (const auto& f : metrics_files) models.push_back(load_metrics(f));
  std::set<std::string> names;
  for (auto& m : models) {
    // Same model evaluated on different label sources: disambiguate by file stem.
    if (!names.insert(m.model).second) m.model = metrics_files[&m - models.data()].stem().string();
    names.insert(m.model);
  }
  auto report = compare_models(models);
  emit_report(report, out_dir);
  return report;
}

}  // namespace abbrx
