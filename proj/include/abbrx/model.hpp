#pragma once

// Per-abbreviation disambiguation network.
//
//   v = max_t ELU(W1 x_t + b)                 local context, filter width 1
//   u = v            or  [v; g]               g: IDF-weighted document mean
//   e = ReLU(W2 u) / ||ReLU(W2 u)||_2
//   p(c | e) = softmax(H e)_c
//
// Word embeddings are frozen; W1, b, W2 and H are trained with mean
// cross-entropy and early stopping on validation loss.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "abbrx/corpus.hpp"
#include "abbrx/datagen.hpp"
#include "abbrx/embeddings.hpp"

namespace abbrx {

/// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  bool operator==(const Matrix&) const = default;
};

enum class Optimizer { sgd, adam };

struct ModelConfig {
  std::size_t window = 8;  // tokens per side
  std::size_t embed_dim = 100;
  std::size_t conv_dim = 100;
  std::size_t out_dim = 100;
  double learning_rate = 0.01;
  std::size_t max_epochs = 100;
  std::size_t patience = 5;
  double min_delta = 1e-4;
  std::size_t batch_size = 32;
  bool use_global = false;
  bool freeze_h = false;
  Optimizer optimizer = Optimizer::sgd;
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t w2_input_dim() const { return use_global ? conv_dim + embed_dim : conv_dim; }

  bool operator==(const ModelConfig&) const = default;
};

struct EncoderParams {
  Matrix w1;              // conv_dim x embed_dim
  std::vector<double> b;  // conv_dim
  Matrix w2;              // out_dim x (conv_dim [+ embed_dim])

  bool operator==(const EncoderParams&) const = default;
};

struct ModelParams {
  EncoderParams encoder;
  Matrix h;  // num_expansions x out_dim

  bool operator==(const ModelParams&) const = default;
};

/// Frozen-embedding view of one sample.
struct EncodedInput {
  Matrix context;             // one row per context token (abbreviation excluded)
  std::vector<double> global; // empty in local mode
};

struct Example {
  EncodedInput input;
  std::size_t label = 0;
};

/// Maps samples to encoder inputs, caching token embeddings. Not thread-safe.
class FeatureExtractor {
 public:
  /// `corpus` and `idf` are only needed for global context.
  FeatureExtractor(const EmbeddingModel& embeddings, const Corpus* corpus = nullptr,
                   const IdfTable* idf = nullptr);

  EncodedInput extract(const LabeledSample& sample, bool use_global);
  /// Document tokens with the substituted span (if any) replaced by the abbreviation.
  std::vector<std::string> substituted_document(const LabeledSample& sample) const;
  std::span<const double> token_embedding(const std::string& token);

 private:
  const EmbeddingModel* embeddings_;
  const Corpus* corpus_;
  const IdfTable* idf_;
  std::unordered_map<std::string, std::vector<double>> cache_;
};

/// Context-token embedding rows of a window, skipping every abbreviation token.
Matrix context_matrix(std::span<const std::string> window, const std::string& abbrev,
                      const EmbeddingModel& embeddings);

/// max_t ELU(W1 x_t + b). An empty context is treated as one zero row. If
/// `argmax` is given it receives the winning position per output unit.
std::vector<double> encode_local(const Matrix& context, const EncoderParams& params,
                                 std::vector<std::size_t>* argmax = nullptr);

/// IDF-weighted mean of the embeddings of every token except `abbrev`.
/// Returns a zero vector (and logs a warning) when nothing remains.
std::vector<double> encode_global(std::span<const std::string> document, const std::string& abbrev,
                                  const EmbeddingModel& embeddings, const IdfTable& idf);

struct SampleEmbedding {
  std::vector<double> e;
  bool degenerate = false;  // ReLU output was all zero; e is the zero vector
};

/// e = ReLU(W2 u) / max(||ReLU(W2 u)||, 1e-12) with u = v or [v; g].
/// Pass an empty `global` in local mode. Throws InvalidArgument on a shape mismatch.
SampleEmbedding encode_sample(std::span<const double> local, std::span<const double> global,
                              const EncoderParams& params);

struct Prediction {
  std::vector<double> probabilities;
  std::size_t label = 0;  // argmax, lowest index on ties
};

/// softmax(H e) and its argmax.
Prediction predict(std::span<const double> e, const Matrix& h);

/// Mean cross-entropy of `batch`. When `grad` is non-null it receives the
/// gradient with respect to every parameter (same shapes as `params`).
double loss_and_gradient(const ModelParams& params, std::span<const Example> batch,
                         ModelParams* grad = nullptr);

/// Largest relative error |a - n| / max(|a|, |n|, 1e-6) between analytic and
/// central-difference (step 1e-4) gradients over every parameter. Coordinates
/// whose perturbation flips a max-pool winner, an ELU branch or a ReLU gate
/// are skipped; `checked` receives the number of compared coordinates.
double gradient_check(const ModelParams& params, std::span<const Example> batch,
                      std::size_t* checked = nullptr);

/// Seeded initialisation: uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
/// H rows start from `h_init` (truncated to out_dim) when given.
ModelParams init_params(const ModelConfig& config, std::size_t num_classes,
                        std::span<const std::vector<double>> h_init = {});

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double validation_loss = 0.0;

  bool operator==(const EpochLog&) const = default;
};

class DisambiguationModel {
 public:
  DisambiguationModel() = default;

  /// A model with a single surviving class that always predicts it.
  static DisambiguationModel constant(std::string abbrev, std::string label,
                                      const ModelConfig& config);

  const std::string& abbrev() const { return abbrev_; }
  const std::vector<std::string>& labels() const { return labels_; }
  const ModelConfig& config() const { return config_; }
  const ModelParams& params() const { return params_; }
  const std::vector<EpochLog>& training_log() const { return log_; }
  std::size_t best_epoch() const { return best_epoch_; }
  bool is_constant() const { return labels_.size() == 1; }

  Prediction predict(const EncodedInput& input) const;
  /// Label string of the predicted class.
  const std::string& predict_label(const EncodedInput& input) const;

  void save(const std::filesystem::path& path) const;
  static DisambiguationModel load(const std::filesystem::path& path);

  bool operator==(const DisambiguationModel&) const = default;

 private:
  friend DisambiguationModel train(const std::string&, const DatasetSplit&,
                                   const std::vector<std::string>&, FeatureExtractor&,
                                   const ModelConfig&);
  friend DisambiguationModel train_examples(const std::string&, const std::vector<std::string>&,
                                            std::span<const Example>, std::span<const Example>,
                                            const ModelConfig&,
                                            std::span<const std::vector<double>>);

  std::string abbrev_;
  std::vector<std::string> labels_;
  ModelConfig config_;
  ModelParams params_;
  std::vector<EpochLog> log_;
  std::size_t best_epoch_ = 0;
};

/// Encodes samples whose label is in `labels`; others are skipped.
std::vector<Example> make_examples(std::span<const LabeledSample> samples,
                                   const std::vector<std::string>& labels,
                                   FeatureExtractor& features, bool use_global);

/// Training on pre-encoded examples. Throws InvalidArgument with fewer than
/// two labels or an empty training set.
DisambiguationModel train_examples(const std::string& abbrev, const std::vector<std::string>& labels,
                                   std::span<const Example> train_set,
                                   std::span<const Example> validation_set,
                                   const ModelConfig& config,
                                   std::span<const std::vector<double>> h_init = {});

/// Encodes the split, warm-starts H from the label embeddings and trains.
DisambiguationModel train(const std::string& abbrev, const DatasetSplit& split,
                          const std::vector<std::string>& labels, FeatureExtractor& features,
                          const ModelConfig& config);

std::string to_string(Optimizer o);
Optimizer optimizer_from_string(const std::string& s);

}  // namespace abbrx
