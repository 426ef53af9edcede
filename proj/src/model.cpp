#include "abbrx/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "abbrx/error.hpp"
#include "abbrx/io.hpp"
#include "abbrx/rng.hpp"

namespace abbrx {
namespace {

constexpr double kNormFloor = 1e-12;
constexpr int kModelFormatVersion = 1;

double elu(double z) { return z > 0.0 ? z : std::expm1(z); }
double elu_grad(double z) { return z > 0.0 ? 1.0 : std::exp(z); }

void check_encoder_shape(const EncoderParams& p, std::size_t embed_dim, std::size_t global_dim) {
  if (p.w1.cols != embed_dim || p.b.size() != p.w1.rows ||
      p.w2.cols != p.w1.rows + global_dim)
    throw InvalidArgument("encoder parameter shapes do not match the input");
}

// Activations kept for the backward pass.
struct Forward {
  Matrix z;                        // pre-activation per context position
  std::vector<std::size_t> argmax; // max-pool winner per conv unit
  std::vector<double> u;           // [v; g]
  std::vector<double> hpre;        // W2 u
  std::vector<double> e;
  double norm = 0.0;
  std::vector<double> probs;
  double loss = 0.0;
};

void forward(const ModelParams& p, const Example& ex, Forward& f) {
  const auto& enc = p.encoder;
  const std::size_t conv = enc.w1.rows;
  const std::size_t embed = enc.w1.cols;
  const Matrix& ctx = ex.input.context;
  const std::size_t positions = std::max<std::size_t>(ctx.rows, 1);

  f.z = Matrix(positions, conv);
  for (std::size_t t = 0; t < positions; ++t) {
    for (std::size_t k = 0; k < conv; ++k) {
      double s = enc.b[k];
      if (ctx.rows > 0) {
        const double* w = &enc.w1.data[k * embed];
        const double* x = &ctx.data[t * embed];
        for (std::size_t j = 0; j < embed; ++j) s += w[j] * x[j];
      }
      f.z(t, k) = s;
    }
  }
  f.argmax.assign(conv, 0);
  f.u.assign(enc.w2.cols, 0.0);
  for (std::size_t k = 0; k < conv; ++k) {
    std::size_t best = 0;
    for (std::size_t t = 1; t < positions; ++t)
      if (f.z(t, k) > f.z(best, k)) best = t;
    f.argmax[k] = best;
    f.u[k] = elu(f.z(best, k));
  }
  std::copy(ex.input.global.begin(), ex.input.global.end(), f.u.begin() + static_cast<long>(conv));

  const std::size_t out = enc.w2.rows;
  f.hpre.assign(out, 0.0);
  double sq = 0.0;
  for (std::size_t o = 0; o < out; ++o) {
    const double* w = &enc.w2.data[o * enc.w2.cols];
    double s = 0.0;
    for (std::size_t j = 0; j < enc.w2.cols; ++j) s += w[j] * f.u[j];
    f.hpre[o] = s;
    if (s > 0.0) sq += s * s;
  }
  f.norm = std::sqrt(sq);
  const double denom = std::max(f.norm, kNormFloor);
  f.e.assign(out, 0.0);
  for (std::size_t o = 0; o < out; ++o) f.e[o] = f.hpre[o] > 0.0 ? f.hpre[o] / denom : 0.0;

  const std::size_t classes = p.h.rows;
  f.probs.assign(classes, 0.0);
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < classes; ++c) {
    double s = 0.0;
    for (std::size_t o = 0; o < out; ++o) s += p.h(c, o) * f.e[o];
    f.probs[c] = s;
    mx = std::max(mx, s);
  }
  double z = 0.0;
  for (auto& x : f.probs) {
    x = std::exp(x - mx);
    z += x;
  }
  for (auto& x : f.probs) x /= z;
  f.loss = -std::log(std::max(f.probs[ex.label], std::numeric_limits<double>::min()));
}

void backward(const ModelParams& p, const Example& ex, const Forward& f, double scale,
              ModelParams& g, std::vector<double>& de, std::vector<double>& dh,
              std::vector<double>& du) {
  const auto& enc = p.encoder;
  const std::size_t classes = p.h.rows;
  const std::size_t out = enc.w2.rows;
  const std::size_t conv = enc.w1.rows;
  const std::size_t embed = enc.w1.cols;

  de.assign(out, 0.0);
  for (std::size_t c = 0; c < classes; ++c) {
    const double dl = scale * (f.probs[c] - (c == ex.label ? 1.0 : 0.0));
    for (std::size_t o = 0; o < out; ++o) {
      g.h(c, o) += dl * f.e[o];
      de[o] += dl * p.h(c, o);
    }
  }
  // d/dr of r/||r||: (de - e (e . de)) / ||r||.
  const double denom = std::max(f.norm, kNormFloor);
  double dot = 0.0;
  for (std::size_t o = 0; o < out; ++o) dot += f.e[o] * de[o];
  dh.assign(out, 0.0);
  for (std::size_t o = 0; o < out; ++o)
    if (f.hpre[o] > 0.0) dh[o] = (de[o] - f.e[o] * dot) / denom;

  du.assign(enc.w2.cols, 0.0);
  for (std::size_t o = 0; o < out; ++o) {
    if (dh[o] == 0.0) continue;
    double* gw = &g.encoder.w2.data[o * enc.w2.cols];
    const double* w = &enc.w2.data[o * enc.w2.cols];
    for (std::size_t j = 0; j < enc.w2.cols; ++j) {
      gw[j] += dh[o] * f.u[j];
      du[j] += dh[o] * w[j];
    }
  }

  const Matrix& ctx = ex.input.context;
  for (std::size_t k = 0; k < conv; ++k) {
    const std::size_t t = f.argmax[k];
    const double dz = du[k] * elu_grad(f.z(t, k));
    g.encoder.b[k] += dz;
    if (ctx.rows == 0) continue;
    double* gw = &g.encoder.w1.data[k * embed];
    const double* x = &ctx.data[t * embed];
    for (std::size_t j = 0; j < embed; ++j) gw[j] += dz * x[j];
  }
}

ModelParams zeros_like(const ModelParams& p) {
  ModelParams z;
  z.encoder.w1 = Matrix(p.encoder.w1.rows, p.encoder.w1.cols);
  z.encoder.b.assign(p.encoder.b.size(), 0.0);
  z.encoder.w2 = Matrix(p.encoder.w2.rows, p.encoder.w2.cols);
  z.h = Matrix(p.h.rows, p.h.cols);
  return z;
}

// Flat views over every parameter, in a fixed order.
std::vector<std::span<double>> blocks(ModelParams& p) {
  return {p.encoder.w1.data, p.encoder.b, p.encoder.w2.data, p.h.data};
}
std::vector<std::span<const double>> blocks(const ModelParams& p) {
  return {p.encoder.w1.data, p.encoder.b, p.encoder.w2.data, p.h.data};
}

// Discrete state of the network on a batch: pool winners, ELU branches at
// the winners and ReLU gates. A finite difference is only meaningful when
// this stays fixed.
std::vector<std::int64_t> activation_pattern(const ModelParams& p, std::span<const Example> batch) {
  std::vector<std::int64_t> pattern;
  Forward f;
  for (const auto& ex : batch) {
    forward(p, ex, f);
    for (std::size_t k = 0; k < f.argmax.size(); ++k) {
      pattern.push_back(static_cast<std::int64_t>(f.argmax[k]));
      pattern.push_back(f.z(f.argmax[k], k) > 0.0);
    }
    for (double h : f.hpre) pattern.push_back(h > 0.0);
  }
  return pattern;
}

nlohmann::json matrix_to_json(const Matrix& m) {
  return {{"rows", m.rows}, {"cols", m.cols}, {"data", m.data}};
}

Matrix matrix_from_json(const nlohmann::json& j) {
  Matrix m;
  m.rows = j.at("rows").get<std::size_t>();
  m.cols = j.at("cols").get<std::size_t>();
  m.data = j.at("data").get<std::vector<double>>();
  if (m.data.size() != m.rows * m.cols) throw InvalidArgument("matrix data size mismatch");
  return m;
}

nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"window", c.window},         {"embed_dim", c.embed_dim},
          {"conv_dim", c.conv_dim},     {"out_dim", c.out_dim},
          {"learning_rate", c.learning_rate}, {"max_epochs", c.max_epochs},
          {"patience", c.patience},     {"min_delta", c.min_delta},
          {"batch_size", c.batch_size}, {"use_global", c.use_global},
          {"freeze_h", c.freeze_h},     {"optimizer", to_string(c.optimizer)},
          {"seed", c.seed}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.window = j.at("window").get<std::size_t>();
  c.embed_dim = j.at("embed_dim").get<std::size_t>();
  c.conv_dim = j.at("conv_dim").get<std::size_t>();
  c.out_dim = j.at("out_dim").get<std::size_t>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.max_epochs = j.at("max_epochs").get<std::size_t>();
  c.patience = j.at("patience").get<std::size_t>();
  c.min_delta = j.at("min_delta").get<double>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.use_global = j.at("use_global").get<bool>();
  c.freeze_h = j.at("freeze_h").get<bool>();
  c.optimizer = optimizer_from_string(j.at("optimizer").get<std::string>());
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

}  // namespace

std::string to_string(Optimizer o) { return o == Optimizer::sgd ? "sgd" : "adam"; }

Optimizer optimizer_from_string(const std::string& s) {
  if (s == "sgd") return Optimizer::sgd;
  if (s == "adam") return Optimizer::adam;
  throw ConfigError("unknown optimizer '" + s + "' (expected sgd or adam)");
}

void ModelConfig::validate() const {
  if (embed_dim == 0 || conv_dim == 0 || out_dim == 0)
    throw ConfigError("model dimensions must be > 0");
  if (!(learning_rate > 0.0)) throw ConfigError("model learning_rate must be > 0");
  if (max_epochs == 0) throw ConfigError("model max_epochs must be > 0");
  if (batch_size == 0) throw ConfigError("model batch_size must be > 0");
}

FeatureExtractor::FeatureExtractor(const EmbeddingModel& embeddings, const Corpus* corpus,
                                   const IdfTable* idf)
    : embeddings_(&embeddings), corpus_(corpus), idf_(idf) {}

std::span<const double> FeatureExtractor::token_embedding(const std::string& token) {
  auto it = cache_.find(token);
  if (it == cache_.end()) {
    const auto v = embeddings_->token_vector(token);
    it = cache_.emplace(token, std::vector<double>(v.begin(), v.end())).first;
  }
  return it->second;
}

std::vector<std::string> FeatureExtractor::substituted_document(const LabeledSample& sample) const {
  if (!corpus_) throw InvalidArgument("global context needs a corpus");
  const auto pos = corpus_->find(sample.doc_id);
  if (!pos) throw InvalidArgument("document '" + sample.doc_id + "' is not in the corpus");
  const auto& tokens = (*corpus_)[*pos].tokens;
  if (!sample.doc_span) return tokens;
  const auto [begin, len] = *sample.doc_span;
  if (begin + len > tokens.size())
    throw InvalidArgument("sample span lies outside document '" + sample.doc_id + "'");
  std::vector<std::string> out(tokens.begin(), tokens.begin() + static_cast<long>(begin));
  out.push_back(sample.abbrev);
  out.insert(out.end(), tokens.begin() + static_cast<long>(begin + len), tokens.end());
  return out;
}

EncodedInput FeatureExtractor::extract(const LabeledSample& sample, bool use_global) {
  const auto dim = static_cast<std::size_t>(embeddings_->dim());
  EncodedInput in;
  std::size_t rows = 0;
  for (const auto& t : sample.tokens)
    if (t != sample.abbrev) ++rows;
  in.context = Matrix(rows, dim);
  std::size_t r = 0;
  for (const auto& t : sample.tokens) {
    if (t == sample.abbrev) continue;
    const auto v = token_embedding(t);
    std::copy(v.begin(), v.end(), in.context.row(r++).begin());
  }
  if (use_global) {
    if (!idf_) throw InvalidArgument("global context needs an IDF table");
    const auto doc = substituted_document(sample);
    in.global.assign(dim, 0.0);
    double total = 0.0;
    for (const auto& t : doc) {
      if (t == sample.abbrev) continue;
      const double w = idf_->weight(t);
      const auto v = token_embedding(t);
      for (std::size_t k = 0; k < dim; ++k) in.global[k] += w * v[k];
      total += w;
    }
    if (total > 0.0) {
      for (auto& x : in.global) x /= total;
    } else {
      spdlog::warn("document '{}' has no tokens besides '{}'; global context is zero",
                   sample.doc_id, sample.abbrev);
    }
  }
  return in;
}

Matrix context_matrix(std::span<const std::string> window, const std::string& abbrev,
                      const EmbeddingModel& embeddings) {
  const auto dim = static_cast<std::size_t>(embeddings.dim());
  std::vector<const std::string*> kept;
  for (const auto& t : window)
    if (t != abbrev) kept.push_back(&t);
  Matrix m(kept.size(), dim);
  for (std::size_t r = 0; r < kept.size(); ++r) {
    const auto v = embeddings.token_vector(*kept[r]);
    for (std::size_t k = 0; k < dim; ++k) m(r, k) = v[k];
  }
  return m;
}

std::vector<double> encode_local(const Matrix& context, const EncoderParams& params,
                                 std::vector<std::size_t>* argmax) {
  if (context.rows > 0 && context.cols != params.w1.cols)
    throw InvalidArgument("encode_local: context width does not match W1");
  if (params.b.size() != params.w1.rows) throw InvalidArgument("encode_local: bias size mismatch");
  const std::size_t conv = params.w1.rows;
  const std::size_t positions = std::max<std::size_t>(context.rows, 1);
  std::vector<double> v(conv, -std::numeric_limits<double>::infinity());
  if (argmax) argmax->assign(conv, 0);
  for (std::size_t t = 0; t < positions; ++t) {
    for (std::size_t k = 0; k < conv; ++k) {
      double s = params.b[k];
      if (context.rows > 0)
        for (std::size_t j = 0; j < params.w1.cols; ++j) s += params.w1(k, j) * context(t, j);
      const double a = elu(s);
      if (a > v[k]) {
        v[k] = a;
        if (argmax) (*argmax)[k] = t;
      }
    }
  }
  return v;
}

std::vector<double> encode_global(std::span<const std::string> document, const std::string& abbrev,
                                  const EmbeddingModel& embeddings, const IdfTable& idf) {
  const auto dim = static_cast<std::size_t>(embeddings.dim());
  std::vector<double> g(dim, 0.0);
  double total = 0.0;
  for (const auto& t : document) {
    if (t == abbrev) continue;
    const double w = idf.weight(t);
    const auto v = embeddings.token_vector(t);
    for (std::size_t k = 0; k < dim; ++k) g[k] += w * v[k];
    total += w;
  }
  if (total == 0.0) {
    spdlog::warn("document has no tokens besides '{}'; global context is zero", abbrev);
    return g;
  }
  for (auto& x : g) x /= total;
  return g;
}

SampleEmbedding encode_sample(std::span<const double> local, std::span<const double> global,
                              const EncoderParams& params) {
  if (local.size() != params.w1.rows || params.w2.cols != local.size() + global.size())
    throw InvalidArgument("encode_sample: [v; g] has width " +
                          std::to_string(local.size()) + "+" + std::to_string(global.size()) +
                          ", expected " + std::to_string(params.w1.rows) + " and W2 width " +
                          std::to_string(params.w2.cols));
  SampleEmbedding out;
  out.e.assign(params.w2.rows, 0.0);
  double sq = 0.0;
  for (std::size_t o = 0; o < params.w2.rows; ++o) {
    double s = 0.0;
    for (std::size_t j = 0; j < local.size(); ++j) s += params.w2(o, j) * local[j];
    for (std::size_t j = 0; j < global.size(); ++j) s += params.w2(o, local.size() + j) * global[j];
    out.e[o] = std::max(s, 0.0);
    sq += out.e[o] * out.e[o];
  }
  const double norm = std::sqrt(sq);
  out.degenerate = norm == 0.0;
  const double denom = std::max(norm, kNormFloor);
  for (auto& x : out.e) x /= denom;
  return out;
}

Prediction predict(std::span<const double> e, const Matrix& h) {
  if (h.cols != e.size()) throw InvalidArgument("predict: H width does not match e");
  Prediction p;
  p.probabilities.assign(h.rows, 0.0);
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < h.rows; ++c) {
    double s = 0.0;
    for (std::size_t o = 0; o < e.size(); ++o) s += h(c, o) * e[o];
    p.probabilities[c] = s;
    mx = std::max(mx, s);
  }
  double z = 0.0;
  for (auto& x : p.probabilities) {
    x = std::exp(x - mx);
    z += x;
  }
  for (auto& x : p.probabilities) x /= z;
  for (std::size_t c = 1; c < h.rows; ++c)
    if (p.probabilities[c] > p.probabilities[p.label]) p.label = c;
  return p;
}

double loss_and_gradient(const ModelParams& params, std::span<const Example> batch,
                         ModelParams* grad) {
  if (batch.empty()) return 0.0;
  if (grad) *grad = zeros_like(params);
  const double scale = 1.0 / static_cast<double>(batch.size());
  Forward f;
  std::vector<double> de, dh, du;
  double total = 0.0;
  for (const auto& ex : batch) {
    forward(params, ex, f);
    total += f.loss;
    if (grad) backward(params, ex, f, scale, *grad, de, dh, du);
  }
  return total * scale;
}

double gradient_check(const ModelParams& params, std::span<const Example> batch,
                      std::size_t* checked) {
  constexpr double step = 1e-4;
  ModelParams analytic;
  loss_and_gradient(params, batch, &analytic);
  const auto base_pattern = activation_pattern(params, batch);

  ModelParams probe = params;
  auto probe_blocks = blocks(probe);
  const auto grad_blocks = blocks(static_cast<const ModelParams&>(analytic));
  double worst = 0.0;
  std::size_t compared = 0;
  for (std::size_t b = 0; b < probe_blocks.size(); ++b) {
    for (std::size_t i = 0; i < probe_blocks[b].size(); ++i) {
      double& x = probe_blocks[b][i];
      const double saved = x;
      x = saved + step;
      const bool plus_ok = activation_pattern(probe, batch) == base_pattern;
      const double lp = loss_and_gradient(probe, batch);
      x = saved - step;
      const bool minus_ok = activation_pattern(probe, batch) == base_pattern;
      const double lm = loss_and_gradient(probe, batch);
      x = saved;
      if (!plus_ok || !minus_ok) continue;
      const double numeric = (lp - lm) / (2.0 * step);
      const double a = grad_blocks[b][i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
      worst = std::max(worst, rel);
      ++compared;
    }
  }
  if (checked) *checked = compared;
  return worst;
}

ModelParams init_params(const ModelConfig& config, std::size_t num_classes,
                        std::span<const std::vector<double>> h_init) {
  config.validate();
  Rng rng(derive_seed(config.seed, "init"));
  auto fill = [&](std::span<double> xs, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& x : xs) x = rng.uniform(-bound, bound);
  };
  ModelParams p;
  p.encoder.w1 = Matrix(config.conv_dim, config.embed_dim);
  fill(p.encoder.w1.data, config.embed_dim);
  p.encoder.b.assign(config.conv_dim, 0.0);
  fill(p.encoder.b, config.embed_dim);
  p.encoder.w2 = Matrix(config.out_dim, config.w2_input_dim());
  fill(p.encoder.w2.data, config.w2_input_dim());
  p.h = Matrix(num_classes, config.out_dim);
  fill(p.h.data, config.out_dim);
  if (!h_init.empty()) {
    if (h_init.size() != num_classes) throw InvalidArgument("init_params: one H row per class");
    for (std::size_t c = 0; c < num_classes; ++c) {
      if (h_init[c].size() < config.out_dim) continue;  // too short to truncate: keep random
      std::copy_n(h_init[c].begin(), config.out_dim, p.h.row(c).begin());
    }
  }
  return p;
}

DisambiguationModel DisambiguationModel::constant(std::string abbrev, std::string label,
                                                  const ModelConfig& config) {
  DisambiguationModel m;
  m.abbrev_ = std::move(abbrev);
  m.labels_ = {std::move(label)};
  m.config_ = config;
  return m;
}

Prediction DisambiguationModel::predict(const EncodedInput& input) const {
  if (is_constant()) return {{1.0}, 0};
  const auto v = encode_local(input.context, params_.encoder);
  const auto e = encode_sample(v, input.global, params_.encoder);
  return abbrx::predict(e.e, params_.h);
}

const std::string& DisambiguationModel::predict_label(const EncodedInput& input) const {
  return labels_.at(predict(input).label);
}

void DisambiguationModel::save(const std::filesystem::path& path) const {
  nlohmann::json log = nlohmann::json::array();
  for (const auto& e : log_)
    log.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.validation_loss}});
  nlohmann::json j = {{"format", "abbrx-model"},
                      {"version", kModelFormatVersion},
                      {"abbrev", abbrev_},
                      {"labels", labels_},
                      {"config", config_to_json(config_)},
                      {"best_epoch", best_epoch_},
                      {"training_log", log}};
  if (!is_constant()) {
    j["W1"] = matrix_to_json(params_.encoder.w1);
    j["b"] = params_.encoder.b;
    j["W2"] = matrix_to_json(params_.encoder.w2);
    j["H"] = matrix_to_json(params_.h);
  }
  io::write_atomic(path, j.dump() + "\n");
}

DisambiguationModel DisambiguationModel::load(const std::filesystem::path& path) {
  const std::string text = io::read_file(path);
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("format").get<std::string>() != "abbrx-model")
      throw InvalidArgument("not an abbrx model file");
    if (j.at("version").get<int>() != kModelFormatVersion)
      throw InvalidArgument("unsupported model version " + j.at("version").dump());
    DisambiguationModel m;
    m.abbrev_ = j.at("abbrev").get<std::string>();
    m.labels_ = j.at("labels").get<std::vector<std::string>>();
    m.config_ = config_from_json(j.at("config"));
    m.best_epoch_ = j.at("best_epoch").get<std::size_t>();
    for (const auto& e : j.at("training_log"))
      m.log_.push_back({e.at("epoch").get<std::size_t>(), e.at("train_loss").get<double>(),
                        e.at("val_loss").get<double>()});
    if (m.labels_.empty()) throw InvalidArgument("model has no labels");
    if (!m.is_constant()) {
      m.params_.encoder.w1 = matrix_from_json(j.at("W1"));
      m.params_.encoder.b = j.at("b").get<std::vector<double>>();
      m.params_.encoder.w2 = matrix_from_json(j.at("W2"));
      m.params_.h = matrix_from_json(j.at("H"));
      if (m.params_.h.rows != m.labels_.size()) throw InvalidArgument("H rows do not match labels");
      check_encoder_shape(m.params_.encoder, m.config_.embed_dim,
                          m.config_.use_global ? m.config_.embed_dim : 0);
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string(), 0, e.what());
  } catch (const InvalidArgument& e) {
    throw ParseError(path.string(), 0, e.what());
  }
}

std::vector<Example> make_examples(std::span<const LabeledSample> samples,
                                   const std::vector<std::string>& labels,
                                   FeatureExtractor& features, bool use_global) {
  std::vector<Example> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    auto it = std::find(labels.begin(), labels.end(), s.label);
    if (it == labels.end()) continue;
    out.push_back({features.extract(s, use_global), static_cast<std::size_t>(it - labels.begin())});
  }
  return out;
}

DisambiguationModel train_examples(const std::string& abbrev, const std::vector<std::string>& labels,
                                   std::span<const Example> train_set,
                                   std::span<const Example> validation_set,
                                   const ModelConfig& config,
                                   std::span<const std::vector<double>> h_init) {
  config.validate();
  if (labels.size() < 2)
    throw InvalidArgument("'" + abbrev + "' has a single surviving expansion; nothing to disambiguate");
  if (train_set.empty()) throw InvalidArgument("'" + abbrev + "' has no training samples");

  DisambiguationModel model;
  model.abbrev_ = abbrev;
  model.labels_ = labels;
  model.config_ = config;
  ModelParams params = init_params(config, labels.size(), h_init);

  auto pblocks = blocks(params);
  std::vector<std::vector<double>> m1, m2;
  for (const auto& blk : pblocks) {
    m1.emplace_back(blk.size(), 0.0);
    m2.emplace_back(blk.size(), 0.0);
  }
  constexpr double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  std::size_t step = 0;

  const bool has_val = !validation_set.empty();
  auto val_loss = [&](const ModelParams& p) {
    return loss_and_gradient(p, has_val ? validation_set : train_set);
  };

  ModelParams best = params;
  double best_loss = val_loss(params);
  model.log_.push_back({0, loss_and_gradient(params, train_set), best_loss});
  std::size_t best_epoch = 0, stale = 0;

  Rng rng(derive_seed(config.seed, "shuffle:" + abbrev));
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<Example> batch;
  batch.reserve(config.batch_size);
  ModelParams grad;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    rng.shuffle(order);
    double running = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      batch.clear();
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      for (std::size_t i = start; i < stop; ++i) batch.push_back(train_set[order[i]]);
      running += loss_and_gradient(params, batch, &grad) * static_cast<double>(batch.size());
      ++step;
      auto gblocks = blocks(grad);
      for (std::size_t b = 0; b < pblocks.size(); ++b) {
        if (config.freeze_h && b == 3) continue;
        auto& p = pblocks[b];
        const auto& g = gblocks[b];
        if (config.optimizer == Optimizer::sgd) {
          for (std::size_t i = 0; i < p.size(); ++i) p[i] -= config.learning_rate * g[i];
        } else {
          const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
          const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
          for (std::size_t i = 0; i < p.size(); ++i) {
            m1[b][i] = beta1 * m1[b][i] + (1.0 - beta1) * g[i];
            m2[b][i] = beta2 * m2[b][i] + (1.0 - beta2) * g[i] * g[i];
            p[i] -= config.learning_rate * (m1[b][i] / c1) / (std::sqrt(m2[b][i] / c2) + adam_eps);
          }
        }
      }
    }
    const double vl = val_loss(params);
    model.log_.push_back({epoch, running / static_cast<double>(order.size()), vl});
    if (vl < best_loss) {
      if (vl < best_loss - config.min_delta)
        stale = 0;
      else
        ++stale;
      best_loss = vl;
      best = params;
      best_epoch = epoch;
    } else {
      ++stale;
    }
    if (stale >= config.patience) break;
  }
  model.params_ = std::move(best);
  model.best_epoch_ = best_epoch;
  return model;
}

DisambiguationModel train(const std::string& abbrev, const DatasetSplit& split,
                          const std::vector<std::string>& labels, FeatureExtractor& features,
                          const ModelConfig& config) {
  const auto train_set = make_examples(split.train, labels, features, config.use_global);
  const auto val_set = make_examples(split.validation, labels, features, config.use_global);
  std::vector<std::vector<double>> h_init;
  for (const auto& label : labels) {
    const auto v = features.token_embedding(join_concept(phrase_from_string(label)));
    h_init.emplace_back(v.begin(), v.end());
  }
  return train_examples(abbrev, labels, train_set, val_set, config, h_init);
}

}  // namespace abbrx
