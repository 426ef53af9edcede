#include "abbrx/embeddings.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "abbrx/error.hpp"
#include "abbrx/io.hpp"
#include "abbrx/rng.hpp"

namespace abbrx {
namespace {

constexpr float kSigmoidClamp = 8.0f;

float sigmoid(float x) {
  if (x > kSigmoidClamp) return 1.0f;
  if (x < -kSigmoidClamp) return 0.0f;
  return 1.0f / (1.0f + std::exp(-x));
}

std::uint32_t fnv1a32(std::string_view s) {
  std::uint32_t h = 2166136261u;
  for (char c : s) {
    h ^= static_cast<std::uint32_t>(static_cast<std::int8_t>(c));
    h *= 16777619u;
  }
  return h;
}

nlohmann::json config_to_json(const EmbeddingConfig& c) {
  return {{"dim", c.dim},
          {"min_ngram", c.min_ngram},
          {"max_ngram", c.max_ngram},
          {"bucket_count", c.bucket_count},
          {"window", c.window},
          {"negative_samples", c.negative_samples},
          {"epochs", c.epochs},
          {"learning_rate", c.learning_rate},
          {"min_count", c.min_count},
          {"seed", c.seed}};
}

EmbeddingConfig config_from_json(const nlohmann::json& j) {
  EmbeddingConfig c;
  c.dim = j.at("dim").get<int>();
  c.min_ngram = j.at("min_ngram").get<int>();
  c.max_ngram = j.at("max_ngram").get<int>();
  c.bucket_count = j.at("bucket_count").get<std::uint32_t>();
  c.window = j.at("window").get<int>();
  c.negative_samples = j.at("negative_samples").get<int>();
  c.epochs = j.at("epochs").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.min_count = j.at("min_count").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

// Splits "a b c" on single spaces into at most `expected` fields.
std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && line[i] == ' ') ++i;
    if (i == line.size()) break;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ') ++j;
    fields.push_back(line.substr(i, j - i));
    i = j;
  }
  return fields;
}

template <class T>
bool parse_number(std::string_view s, T& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::vector<float> parse_vector(const std::string& file, std::size_t line_no,
                                std::span<const std::string_view> fields, int dim) {
  if (fields.size() != static_cast<std::size_t>(dim))
    throw ParseError(file, line_no,
                     "expected " + std::to_string(dim) + " components, got " +
                         std::to_string(fields.size()));
  std::vector<float> v(static_cast<std::size_t>(dim));
  for (int k = 0; k < dim; ++k) {
    if (!parse_number(fields[static_cast<std::size_t>(k)], v[static_cast<std::size_t>(k)]) ||
        !std::isfinite(v[static_cast<std::size_t>(k)]))
      throw ParseError(file, line_no,
                       "bad vector component '" +
                           std::string(fields[static_cast<std::size_t>(k)]) + "'");
  }
  return v;
}

}  // namespace

void EmbeddingConfig::validate() const {
  if (dim <= 0) throw ConfigError("embedding dim must be > 0");
  if (min_ngram <= 0 || min_ngram > max_ngram)
    throw ConfigError("embedding n-gram range must satisfy 0 < min <= max");
  if (bucket_count == 0) throw ConfigError("embedding bucket_count must be > 0");
  if (window <= 0) throw ConfigError("embedding window must be > 0");
  if (negative_samples < 0) throw ConfigError("embedding negative_samples must be >= 0");
  if (epochs <= 0) throw ConfigError("embedding epochs must be > 0");
  if (!(learning_rate > 0.0)) throw ConfigError("embedding learning_rate must be > 0");
  if (min_count <= 0) throw ConfigError("embedding min_count must be > 0");
}

std::vector<std::uint32_t> subword_buckets(std::string_view word, int min_ngram, int max_ngram,
                                           std::uint32_t bucket_count) {
  const std::string bounded = "<" + std::string(word) + ">";
  std::vector<std::uint32_t> out;
  for (std::size_t i = 0; i < bounded.size(); ++i) {
    if ((static_cast<unsigned char>(bounded[i]) & 0xC0) == 0x80) continue;
    std::string ngram;
    std::size_t j = i;
    for (int n = 1; j < bounded.size() && n <= max_ngram; ++n) {
      ngram.push_back(bounded[j++]);
      while (j < bounded.size() && (static_cast<unsigned char>(bounded[j]) & 0xC0) == 0x80)
        ngram.push_back(bounded[j++]);
      if (n >= min_ngram && !(n == 1 && (i == 0 || j == bounded.size())))
        out.push_back(fnv1a32(ngram) % bucket_count);
    }
  }
  return out;
}

EmbeddingModel::Vector initial_bucket_vector(std::uint64_t seed, std::uint32_t bucket, int dim) {
  EmbeddingModel::Vector v(static_cast<std::size_t>(dim));
  std::uint64_t state = derive_seed(seed, static_cast<std::uint64_t>(bucket));
  const double scale = 1.0 / dim;
  for (auto& x : v) {
    state = splitmix64(state);
    const double u = static_cast<double>(state >> 11) * 0x1.0p-53;
    x = static_cast<float>((2.0 * u - 1.0) * scale);
  }
  return v;
}

bool EmbeddingModel::in_vocabulary(std::string_view token) const {
  return word_index_.contains(std::string(token));
}

EmbeddingModel::Vector EmbeddingModel::bucket_vector(std::uint32_t bucket) const {
  if (auto it = buckets_.find(bucket); it != buckets_.end()) return it->second;
  return initial_bucket_vector(config_.seed, bucket, config_.dim);
}

EmbeddingModel::Vector EmbeddingModel::compose_subwords(std::string_view token) const {
  Vector sum(static_cast<std::size_t>(config_.dim), 0.0f);
  const auto ids =
      subword_buckets(token, config_.min_ngram, config_.max_ngram, config_.bucket_count);
  if (ids.empty()) return sum;
  for (auto b : ids) {
    const auto v = bucket_vector(b);
    for (std::size_t k = 0; k < sum.size(); ++k) sum[k] += v[k];
  }
  const float inv = 1.0f / static_cast<float>(ids.size());
  for (auto& x : sum) x *= inv;
  return sum;
}

EmbeddingModel::Vector EmbeddingModel::token_vector(std::string_view token) const {
  if (auto it = word_index_.find(std::string(token)); it != word_index_.end()) {
    const auto d = static_cast<std::size_t>(config_.dim);
    auto first = word_vectors_.begin() + static_cast<long>(it->second * d);
    return Vector(first, first + static_cast<long>(d));
  }
  return compose_subwords(token);
}

EmbeddingModel::Vector EmbeddingModel::embed_phrase(std::span<const std::string> phrase) const {
  if (phrase.empty()) throw InvalidArgument("embed_phrase: empty phrase");
  return token_vector(join_concept(phrase));
}

EmbeddingModel::Vector EmbeddingModel::embed_term(std::string_view term) const {
  const auto tokens = tokenize(term);
  if (tokens.empty()) throw InvalidArgument("embed_term: '" + std::string(term) + "' has no tokens");
  return embed_phrase(tokens);
}

void EmbeddingModel::save(const std::filesystem::path& path) const {
  const auto d = static_cast<std::size_t>(config_.dim);
  std::string out = std::to_string(words_.size()) + " " + std::to_string(config_.dim) + "\n";
  for (std::size_t w = 0; w < words_.size(); ++w) {
    out += words_[w];
    for (std::size_t k = 0; k < d; ++k) {
      out.push_back(' ');
      out += io::format_float(word_vectors_[w * d + k]);
    }
    out.push_back('\n');
  }

  std::map<std::uint32_t, const Vector*> sorted;
  for (const auto& [b, v] : buckets_) sorted.emplace(b, &v);
  std::string sub = "abbrx-subwords 1 " + std::to_string(sorted.size()) + "\n";
  sub += config_to_json(config_).dump() + "\n";
  for (const auto& [b, v] : sorted) {
    sub += std::to_string(b);
    for (float x : *v) {
      sub.push_back(' ');
      sub += io::format_float(x);
    }
    sub.push_back('\n');
  }
  io::write_atomic(path, out);
  auto companion = path;
  companion += ".subwords";
  io::write_atomic(companion, sub);
}

EmbeddingModel EmbeddingModel::load(const std::filesystem::path& path) {
  auto companion = path;
  companion += ".subwords";
  const std::string cfile = companion.string();
  const auto clines = io::read_lines(companion);
  if (clines.size() < 2) throw ParseError(cfile, clines.size(), "truncated subword file");

  EmbeddingModel model;
  std::size_t bucket_rows = 0;
  {
    const auto head = split_fields(clines[0]);
    if (head.size() != 3 || head[0] != "abbrx-subwords" || head[1] != "1" ||
        !parse_number(head[2], bucket_rows))
      throw ParseError(cfile, 1, "expected 'abbrx-subwords 1 <rows>'");
    try {
      model.config_ = config_from_json(nlohmann::json::parse(clines[1]));
      model.config_.validate();
    } catch (const std::exception& e) {
      throw ParseError(cfile, 2, std::string("bad embedding config: ") + e.what());
    }
  }
  const int dim = model.config_.dim;
  if (clines.size() != bucket_rows + 2)
    throw ParseError(cfile, clines.size(), "row count does not match header");
  for (std::size_t n = 2; n < clines.size(); ++n) {
    const auto fields = split_fields(clines[n]);
    std::uint32_t bucket = 0;
    if (fields.empty() || !parse_number(fields[0], bucket) ||
        bucket >= model.config_.bucket_count)
      throw ParseError(cfile, n + 1, "bad bucket id");
    model.buckets_.emplace(bucket, parse_vector(cfile, n + 1,
                                                std::span(fields).subspan(1), dim));
  }

  const std::string file = path.string();
  const auto lines = io::read_lines(path);
  if (lines.empty()) throw ParseError(file, 1, "empty embedding file");
  const auto head = split_fields(lines[0]);
  std::size_t vocab = 0;
  int file_dim = 0;
  if (head.size() != 2 || !parse_number(head[0], vocab) || !parse_number(head[1], file_dim))
    throw ParseError(file, 1, "expected 'vocab_size dim'");
  if (file_dim != dim) throw ParseError(file, 1, "dimension disagrees with subword file");
  if (lines.size() < vocab + 1) throw ParseError(file, lines.size(), "fewer rows than vocab_size");
  model.words_.reserve(vocab);
  model.word_vectors_.reserve(vocab * static_cast<std::size_t>(dim));
  for (std::size_t n = 1; n <= vocab; ++n) {
    const auto fields = split_fields(lines[n]);
    if (fields.empty()) throw ParseError(file, n + 1, "empty row");
    std::string word(fields[0]);
    if (model.word_index_.contains(word)) throw ParseError(file, n + 1, "duplicate word '" + word + "'");
    const auto v = parse_vector(file, n + 1, std::span(fields).subspan(1), dim);
    model.word_index_.emplace(word, model.words_.size());
    model.words_.push_back(std::move(word));
    model.word_vectors_.insert(model.word_vectors_.end(), v.begin(), v.end());
  }
  for (std::size_t n = vocab + 1; n < lines.size(); ++n)
    if (!lines[n].empty()) throw ParseError(file, n + 1, "unexpected trailing row");
  return model;
}

EmbeddingModel train_embeddings(const Corpus& corpus, const EmbeddingConfig& config) {
  config.validate();
  if (corpus.empty()) throw InvalidArgument("train_embeddings: empty corpus");

  std::unordered_map<std::string, std::size_t> counts;
  std::size_t total_tokens = 0;
  for (const auto& doc : corpus)
    for (const auto& t : doc.tokens) ++counts[t];

  std::vector<std::pair<std::string, std::size_t>> vocab;
  for (auto& [w, c] : counts)
    if (c >= static_cast<std::size_t>(config.min_count)) vocab.emplace_back(w, c);
  if (vocab.empty()) throw InvalidArgument("train_embeddings: no token reaches min_count");
  std::sort(vocab.begin(), vocab.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });

  EmbeddingModel model;
  model.config_ = config;
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    model.word_index_.emplace(vocab[i].first, i);
    model.words_.push_back(vocab[i].first);
  }
  const std::size_t nwords = vocab.size();
  const auto d = static_cast<std::size_t>(config.dim);

  // Input rows: one per word, then one per distinct bucket used by the vocabulary.
  std::vector<std::vector<std::uint32_t>> word_buckets(nwords);
  std::map<std::uint32_t, std::size_t> bucket_row;
  for (std::size_t w = 0; w < nwords; ++w) {
    word_buckets[w] =
        subword_buckets(model.words_[w], config.min_ngram, config.max_ngram, config.bucket_count);
    for (auto b : word_buckets[w]) bucket_row.emplace(b, 0);
  }
  std::size_t next_row = nwords;
  for (auto& [b, row] : bucket_row) row = next_row++;

  std::vector<float> input(next_row * d);
  for (std::size_t w = 0; w < nwords; ++w) {
    Rng rng(derive_seed(config.seed, model.words_[w]));
    for (std::size_t k = 0; k < d; ++k)
      input[w * d + k] = static_cast<float>(rng.uniform(-1.0, 1.0) / config.dim);
  }
  for (const auto& [b, row] : bucket_row) {
    const auto v = initial_bucket_vector(config.seed, b, config.dim);
    std::copy(v.begin(), v.end(), input.begin() + static_cast<long>(row * d));
  }
  std::vector<float> output(nwords * d, 0.0f);

  std::vector<std::vector<std::size_t>> rows(nwords);
  for (std::size_t w = 0; w < nwords; ++w) {
    rows[w].push_back(w);
    for (auto b : word_buckets[w]) rows[w].push_back(bucket_row.at(b));
  }

  std::vector<double> cumulative(nwords);
  double acc = 0.0;
  for (std::size_t w = 0; w < nwords; ++w) {
    acc += std::pow(static_cast<double>(vocab[w].second), 0.75);
    cumulative[w] = acc;
  }

  std::vector<std::vector<std::size_t>> lines;
  lines.reserve(corpus.size());
  for (const auto& doc : corpus) {
    std::vector<std::size_t> ids;
    for (const auto& t : doc.tokens)
      if (auto it = model.word_index_.find(t); it != model.word_index_.end())
        ids.push_back(it->second);
    total_tokens += ids.size();
    lines.push_back(std::move(ids));
  }

  Rng rng(derive_seed(config.seed, "skipgram"));
  auto draw_negative = [&](std::size_t target) {
    for (int attempt = 0; attempt < 16; ++attempt) {
      const double u = rng.uniform() * acc;
      auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
      const auto w = static_cast<std::size_t>(
          std::min<long>(it - cumulative.begin(), static_cast<long>(nwords) - 1));
      if (w != target) return w;
    }
    return target;
  };

  std::vector<float> hidden(d), grad(d);
  const double work = static_cast<double>(config.epochs) * static_cast<double>(total_tokens);
  double processed = 0.0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (const auto& ids : lines) {
      for (std::size_t w = 0; w < ids.size(); ++w) {
        const float lr = static_cast<float>(config.learning_rate * std::max(0.0, 1.0 - processed / work));
        processed += 1.0;
        const auto& in_rows = rows[ids[w]];
        const int boundary = static_cast<int>(rng.integer(1, config.window));
        for (int c = -boundary; c <= boundary; ++c) {
          if (c == 0) continue;
          const long pos = static_cast<long>(w) + c;
          if (pos < 0 || pos >= static_cast<long>(ids.size())) continue;

          std::fill(hidden.begin(), hidden.end(), 0.0f);
          for (auto r : in_rows)
            for (std::size_t k = 0; k < d; ++k) hidden[k] += input[r * d + k];
          const float inv = 1.0f / static_cast<float>(in_rows.size());
          for (auto& h : hidden) h *= inv;
          std::fill(grad.begin(), grad.end(), 0.0f);

          auto binary_step = [&](std::size_t target, float label) {
            float* out = &output[target * d];
            float dot = 0.0f;
            for (std::size_t k = 0; k < d; ++k) dot += out[k] * hidden[k];
            const float alpha = lr * (label - sigmoid(dot));
            for (std::size_t k = 0; k < d; ++k) {
              grad[k] += alpha * out[k];
              out[k] += alpha * hidden[k];
            }
          };
          const std::size_t target = ids[static_cast<std::size_t>(pos)];
          binary_step(target, 1.0f);
          for (int n = 0; n < config.negative_samples; ++n) {
            const auto neg = draw_negative(target);
            if (neg != target) binary_step(neg, 0.0f);
          }
          for (auto r : in_rows)
            for (std::size_t k = 0; k < d; ++k) input[r * d + k] += grad[k];
        }
      }
    }
  }

  model.word_vectors_.assign(nwords * d, 0.0f);
  for (std::size_t w = 0; w < nwords; ++w) {
    const float inv = 1.0f / static_cast<float>(rows[w].size());
    for (auto r : rows[w])
      for (std::size_t k = 0; k < d; ++k) model.word_vectors_[w * d + k] += input[r * d + k];
    for (std::size_t k = 0; k < d; ++k) model.word_vectors_[w * d + k] *= inv;
  }
  for (const auto& [b, row] : bucket_row)
    model.buckets_.emplace(b, EmbeddingModel::Vector(input.begin() + static_cast<long>(row * d),
                                                     input.begin() + static_cast<long>((row + 1) * d)));
  return model;
}

double euclidean_distance(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw InvalidArgument("euclidean_distance: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    s += diff * diff;
  }
  return std::sqrt(s);
}

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw InvalidArgument("cosine_similarity: dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / std::sqrt(na * nb);
}

}  // namespace abbrx
