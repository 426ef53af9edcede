#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "abbrx/error.hpp"
#include "abbrx/model.hpp"
#include "abbrx/rng.hpp"
#include "support.hpp"

using namespace abbrx;
using abbrx::testing::TempDir;

namespace {

double elu_ref(double z) { return z > 0.0 ? z : std::exp(z) - 1.0; }

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c, double scale = 1.0) {
  Matrix m(r, c);
  for (auto& x : m.data) x = rng.uniform(-scale, scale);
  return m;
}

std::vector<double> random_vector(Rng& rng, std::size_t n, double scale = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-scale, scale);
  return v;
}

ModelConfig small_config(bool global, std::uint64_t seed = 0) {
  ModelConfig c;
  c.embed_dim = 4;
  c.conv_dim = 5;
  c.out_dim = 3;
  c.use_global = global;
  c.seed = seed;
  return c;
}

std::vector<Example> random_batch(Rng& rng, const ModelConfig& c, std::size_t classes, std::size_t n) {
  std::vector<Example> batch;
  for (std::size_t i = 0; i < n; ++i) {
    Example ex;
    ex.input.context = random_matrix(rng, 1 + rng.index(4), c.embed_dim);
    if (c.use_global) ex.input.global = random_vector(rng, c.embed_dim);
    ex.label = rng.index(classes);
    batch.push_back(std::move(ex));
  }
  return batch;
}

// Class k contexts come from a disjoint cluster around +/- basis vectors.
std::vector<Example> separable_set(Rng& rng, std::size_t n, std::size_t dim) {
  std::vector<Example> out;
  for (std::size_t i = 0; i < n; ++i) {
    Example ex;
    ex.label = i % 2;
    ex.input.context = Matrix(3, dim);
    for (std::size_t t = 0; t < 3; ++t)
      for (std::size_t d = 0; d < dim; ++d)
        ex.input.context(t, d) = (d == ex.label ? 1.0 : 0.0) + rng.uniform(-0.1, 0.1);
    out.push_back(std::move(ex));
  }
  return out;
}

double accuracy(const DisambiguationModel& m, std::span<const Example> xs) {
  std::size_t ok = 0;
  for (const auto& ex : xs) ok += m.predict(ex.input).label == ex.label;
  return static_cast<double>(ok) / static_cast<double>(xs.size());
}

}  // namespace

TEST(ModelConfig, Validation) {
  ModelConfig c;
  EXPECT_NO_THROW(c.validate());
  c.conv_dim = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ModelConfig{};
  c.learning_rate = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_EQ(ModelConfig{}.window, 8u);
  EXPECT_EQ(ModelConfig{}.optimizer, Optimizer::sgd);
  EXPECT_EQ(optimizer_from_string(to_string(Optimizer::adam)), Optimizer::adam);
}

TEST(EncodeLocal, SingleTokenIsDirectElu) {
  Rng rng(1);
  EncoderParams p{random_matrix(rng, 5, 4), random_vector(rng, 5), random_matrix(rng, 3, 5)};
  const Matrix x = random_matrix(rng, 1, 4);
  const auto v = encode_local(x, p);
  for (std::size_t k = 0; k < 5; ++k) {
    double z = p.b[k];
    for (std::size_t d = 0; d < 4; ++d) z += p.w1(k, d) * x(0, d);
    EXPECT_NEAR(v[k], elu_ref(z), 1e-14);
  }
}

TEST(EncodeLocal, HandComputedTwoTokenWindow) {
  // W1 = [[1, 0], [0, -1]], b = [0, 0.5]; x1 = (2, 1), x2 = (-1, 3).
  EncoderParams p;
  p.w1 = Matrix(2, 2);
  p.w1(0, 0) = 1.0;
  p.w1(1, 1) = -1.0;
  p.b = {0.0, 0.5};
  Matrix x(2, 2);
  x(0, 0) = 2.0;
  x(0, 1) = 1.0;
  x(1, 0) = -1.0;
  x(1, 1) = 3.0;
  // unit0: ELU(2)=2, ELU(-1)=e^-1-1 -> 2. unit1: ELU(-0.5), ELU(-2.5) -> e^-0.5-1.
  std::vector<std::size_t> argmax;
  const auto v = encode_local(x, p, &argmax);
  EXPECT_NEAR(v[0], 2.0, 1e-15);
  EXPECT_NEAR(v[1], std::exp(-0.5) - 1.0, 1e-15);
  EXPECT_EQ(argmax, (std::vector<std::size_t>{0, 0}));
}

TEST(EncodeLocal, PermutationInvariant) {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    EncoderParams p{random_matrix(rng, 6, 4), random_vector(rng, 6), {}};
    const Matrix x = random_matrix(rng, 2 + rng.index(8), 4);
    std::vector<std::size_t> perm(x.rows);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    Matrix y(x.rows, x.cols);
    for (std::size_t r = 0; r < x.rows; ++r)
      std::copy(x.row(perm[r]).begin(), x.row(perm[r]).end(), y.row(r).begin());
    EXPECT_EQ(encode_local(x, p), encode_local(y, p));
  }
}

TEST(EncodeLocal, EmptyContextIsZeroRow) {
  Rng rng(3);
  EncoderParams p{random_matrix(rng, 3, 2), random_vector(rng, 3), {}};
  const auto v = encode_local(Matrix(0, 2), p);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(v[k], elu_ref(p.b[k]), 1e-15);
}

TEST(ContextMatrix, SkipsAbbreviation) {
  TempDir dir;
  const auto emb = abbrx::testing::make_embeddings(dir, {{"a", {1, 0}}, {"b", {0, 1}}, {"ivf", {5, 5}}}, 2);
  const std::vector<std::string> w = {"a", "ivf", "b", "ivf"};
  const auto m = context_matrix(w, "ivf", emb);
  ASSERT_EQ(m.rows, 2u);
  EXPECT_NEAR(m(0, 0), 1.0, 1e-6);
  EXPECT_NEAR(m(1, 1), 1.0, 1e-6);
}

TEST(EncodeGlobal, ConstantDocumentGivesThatVector) {
  TempDir dir;
  const auto emb = abbrx::testing::make_embeddings(dir, {{"u", {0.25f, -0.5f, 1.0f}}}, 3);
  const IdfTable idf({{"u", 2.7}}, 10);
  const std::vector<std::string> doc = {"u", "u", "u", "u"};
  const auto g = encode_global(doc, "ivf", emb, idf);
  EXPECT_NEAR(g[0], 0.25, 1e-6);
  EXPECT_NEAR(g[1], -0.5, 1e-6);
  EXPECT_NEAR(g[2], 1.0, 1e-6);
}

TEST(EncodeGlobal, IdfWeightedMean) {
  TempDir dir;
  const auto emb = abbrx::testing::make_embeddings(dir, {{"p", {1, 0}}, {"q", {0, 2}}}, 2);
  const IdfTable idf({{"p", 1.0}, {"q", 3.0}}, 10);
  const std::vector<std::string> doc = {"p", "q"};
  const auto g = encode_global(doc, "ivf", emb, idf);
  EXPECT_NEAR(g[0], 1.0 / 4.0, 1e-6);
  EXPECT_NEAR(g[1], 6.0 / 4.0, 1e-6);
}

TEST(EncodeGlobal, AbbreviationTokensExcluded) {
  TempDir dir;
  const auto emb = abbrx::testing::make_embeddings(
      dir, {{"p", {1, 0}}, {"q", {0, 2}}, {"r", {-1, 1}}, {"ivf", {9, 9}}}, 2);
  const IdfTable idf({{"p", 1.0}, {"q", 3.0}, {"r", 0.5}, {"ivf", 7.0}}, 10);
  Rng rng(4);
  const std::vector<std::string> vocab = {"p", "q", "r"};
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<std::string> doc;
    for (std::size_t i = 0; i < 1 + rng.index(10); ++i) doc.push_back(vocab[rng.index(3)]);
    const auto base = encode_global(doc, "ivf", emb, idf);
    auto more = doc;
    for (std::size_t i = 0; i < 1 + rng.index(4); ++i)
      more.insert(more.begin() + static_cast<std::ptrdiff_t>(rng.index(more.size() + 1)), "ivf");
    const auto g = encode_global(more, "ivf", emb, idf);
    for (std::size_t d = 0; d < 2; ++d) EXPECT_NEAR(g[d], base[d], 1e-12);
  }
  const std::vector<std::string> only = {"ivf", "ivf"};
  const auto z = encode_global(only, "ivf", emb, idf);
  EXPECT_EQ(z, (std::vector<double>{0.0, 0.0}));
}

TEST(EncodeSample, UnitNormAndPositiveScaling) {
  Rng rng(5);
  std::size_t nondegenerate = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const bool global = trial % 2;
    EncoderParams p{Matrix(5, 4), std::vector<double>(5), random_matrix(rng, 6, global ? 9 : 5)};
    const auto v = random_vector(rng, 5);
    const auto g = global ? random_vector(rng, 4) : std::vector<double>{};
    const auto s = encode_sample(v, g, p);
    if (s.degenerate) continue;
    ++nondegenerate;
    double norm = 0.0;
    for (double x : s.e) norm += x * x;
    EXPECT_NEAR(std::sqrt(norm), 1.0, 1e-9);
    const double c = rng.uniform(0.1, 10.0);
    auto cv = v, cg = g;
    for (auto& x : cv) x *= c;
    for (auto& x : cg) x *= c;
    const auto t = encode_sample(cv, cg, p);
    for (std::size_t i = 0; i < s.e.size(); ++i) EXPECT_NEAR(s.e[i], t.e[i], 1e-12);
  }
  EXPECT_GT(nondegenerate, 150u);
}

TEST(EncodeSample, AllNegativeIsDegenerate) {
  EncoderParams p{Matrix(2, 1), std::vector<double>(2), Matrix(3, 2, -1.0)};
  const std::vector<double> v = {1.0, 2.0};
  const auto s = encode_sample(v, {}, p);
  EXPECT_TRUE(s.degenerate);
  EXPECT_EQ(s.e, (std::vector<double>{0.0, 0.0, 0.0}));
}

TEST(EncodeSample, ShapeMismatch) {
  EncoderParams p{Matrix(5, 1), std::vector<double>(5), Matrix(3, 5)};
  const std::vector<double> v(4, 1.0);
  EXPECT_THROW(encode_sample(v, {}, p), InvalidArgument);
  const std::vector<double> v5(5, 1.0), g(2, 1.0);
  EXPECT_THROW(encode_sample(v5, g, p), InvalidArgument);
}

TEST(Predict, Examples) {
  Matrix same(3, 2, 0.4);
  const std::vector<double> e = {0.6, 0.8};
  const auto u = predict(e, same);
  for (double p : u.probabilities) EXPECT_NEAR(p, 1.0 / 3.0, 1e-15);
  EXPECT_EQ(u.label, 0u);  // ties -> lowest index

  Matrix h(2, 2);
  h(0, 0) = 1.0;  // logits (1, 0) for e = (1, 0)
  const std::vector<double> e1 = {1.0, 0.0};
  const auto p = predict(e1, h);
  EXPECT_NEAR(p.probabilities[0], 0.7311, 1e-4);
  EXPECT_NEAR(p.probabilities[0], 1.0 / (1.0 + std::exp(-1.0)), 1e-15);
  EXPECT_EQ(p.label, 0u);
}

TEST(Predict, SumsToOneAndShiftInvariant) {
  Rng rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 2 + rng.index(5), d = 1 + rng.index(6);
    Matrix h = random_matrix(rng, k, d, 3.0);
    auto e = random_vector(rng, d);
    const auto p = predict(e, h);
    EXPECT_NEAR(std::accumulate(p.probabilities.begin(), p.probabilities.end(), 0.0), 1.0, 1e-12);
    EXPECT_LT(p.label, k);
    // A constant added to every logit: append a shared column and a unit coordinate.
    Matrix h2(k, d + 1);
    const double c = rng.uniform(-20.0, 20.0);
    for (std::size_t r = 0; r < k; ++r) {
      for (std::size_t j = 0; j < d; ++j) h2(r, j) = h(r, j);
      h2(r, d) = c;
    }
    e.push_back(1.0);
    const auto q = predict(e, h2);
    EXPECT_EQ(q.label, p.label);
    for (std::size_t r = 0; r < k; ++r) EXPECT_NEAR(q.probabilities[r], p.probabilities[r], 1e-12);
  }
}

TEST(GradientCheck, TwentySeedsBothModes) {
  for (bool global : {false, true}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto c = small_config(global, seed);
      Rng rng(derive_seed(seed, "batch"));
      const auto params = init_params(c, 3, {});
      const auto batch = random_batch(rng, c, 3, 6);
      std::size_t checked = 0;
      const double err = gradient_check(params, batch, &checked);
      EXPECT_LE(err, 1e-4) << "seed " << seed << " global " << global;
      // w1 + b + w2 + h coordinates; most must survive the kink filter.
      const std::size_t total = 5 * 4 + 5 + 3 * c.w2_input_dim() + 3 * 3;
      EXPECT_GT(checked, total / 2);
    }
  }
}

TEST(GradientCheck, MatchesIndependentLoss) {
  // Cross-entropy recomputed from the forward primitives.
  Rng rng(7);
  const auto c = small_config(true, 9);
  const auto params = init_params(c, 2, {});
  const auto batch = random_batch(rng, c, 2, 5);
  double total = 0.0;
  for (const auto& ex : batch) {
    const auto v = encode_local(ex.input.context, params.encoder);
    const auto s = encode_sample(v, ex.input.global, params.encoder);
    total += -std::log(predict(s.e, params.h).probabilities[ex.label]);
  }
  EXPECT_NEAR(loss_and_gradient(params, batch), total / 5.0, 1e-12);
}

TEST(InitParams, ShapesAndWarmStart) {
  const auto c = small_config(true, 1);
  const std::vector<std::vector<double>> rows = {{1, 2, 3, 4}, {5, 6, 7, 8}};
  const auto p = init_params(c, 2, rows);
  EXPECT_EQ(p.encoder.w1.rows, 5u);
  EXPECT_EQ(p.encoder.w1.cols, 4u);
  EXPECT_EQ(p.encoder.b.size(), 5u);
  EXPECT_EQ(p.encoder.w2.cols, 9u);
  ASSERT_EQ(p.h.rows, 2u);
  ASSERT_EQ(p.h.cols, 3u);
  for (double x : p.encoder.w1.data) EXPECT_LE(std::abs(x), 0.5);
  EXPECT_EQ(init_params(c, 2, rows), p);
}

TEST(Train, SeparableToyReachesPerfectAccuracy) {
  Rng rng(8);
  const auto train_set = separable_set(rng, 40, 4);
  const auto val_set = separable_set(rng, 20, 4);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    ModelConfig c;  // default learning rate and epoch budget
    c.embed_dim = 4;
    c.conv_dim = 16;
    c.out_dim = 16;
    c.seed = seed;
    c.patience = 100;
    const auto m = train_examples("x", {"a", "b"}, train_set, val_set, c);
    EXPECT_DOUBLE_EQ(accuracy(m, train_set), 1.0) << "seed " << seed;
    EXPECT_LE(m.training_log().size(), 101u);
  }
}

TEST(Train, FirstEpochLowersLoss) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed + 50);
    const auto c = small_config(seed % 2, seed);
    const auto data = random_batch(rng, c, 2, 30);
    auto one = c;
    one.max_epochs = 1;
    const auto m = train_examples("x", {"a", "b"}, data, data, one);
    ASSERT_EQ(m.training_log().size(), 2u);
    EXPECT_LT(m.training_log()[1].validation_loss, m.training_log()[0].validation_loss);
  }
}

TEST(Train, EarlyStoppingHalts) {
  Rng rng(9);
  const auto train_set = separable_set(rng, 40, 4);
  auto flipped = separable_set(rng, 20, 4);
  for (auto& ex : flipped) ex.label = 1 - ex.label;  // learning the training set hurts validation
  auto c = small_config(false, 4);
  c.learning_rate = 0.1;
  c.patience = 5;
  const auto m = train_examples("x", {"a", "b"}, train_set, flipped, c);
  EXPECT_LT(m.training_log().size(), c.max_epochs + 1);
  // The returned parameters are those of the best validation epoch.
  const auto& log = m.training_log();
  const auto best = std::min_element(log.begin(), log.end(), [](const EpochLog& a, const EpochLog& b) {
    return a.validation_loss < b.validation_loss;
  });
  EXPECT_EQ(m.best_epoch(), best->epoch);
  EXPECT_NEAR(loss_and_gradient(m.params(), flipped), best->validation_loss, 1e-12);
}

TEST(Train, DeterministicAndSaveLoadExact) {
  Rng rng(10);
  const auto c = small_config(true, 5);
  const auto data = random_batch(rng, c, 3, 24);
  const auto a = train_examples("ivf", {"a", "b", "c"}, data, data, c);
  const auto b = train_examples("ivf", {"a", "b", "c"}, data, data, c);
  EXPECT_EQ(a.params(), b.params());
  TempDir dir;
  a.save(dir / "m.json");
  const auto back = DisambiguationModel::load(dir / "m.json");
  EXPECT_EQ(back, a);
  for (const auto& ex : data) EXPECT_EQ(back.predict(ex.input).probabilities, a.predict(ex.input).probabilities);
}

TEST(Train, Errors) {
  Rng rng(11);
  const auto c = small_config(false);
  const auto data = random_batch(rng, c, 1, 5);
  EXPECT_THROW(train_examples("x", {"only"}, data, data, c), InvalidArgument);
  EXPECT_THROW(train_examples("x", {"a", "b"}, {}, data, c), InvalidArgument);
}

TEST(ConstantModel, AlwaysPredictsItsLabel) {
  const auto m = DisambiguationModel::constant("ivf", "in vitro fertilization", small_config(false));
  EXPECT_TRUE(m.is_constant());
  Rng rng(12);
  for (const auto& ex : random_batch(rng, small_config(false), 1, 5))
    EXPECT_EQ(m.predict_label(ex.input), "in vitro fertilization");
  TempDir dir;
  m.save(dir / "c.json");
  EXPECT_EQ(DisambiguationModel::load(dir / "c.json"), m);
}

TEST(ModelFile, MalformedIsParseError) {
  TempDir dir;
  abbrx::testing::write_text(dir / "m.json", "{\"format\": 1");
  EXPECT_THROW(DisambiguationModel::load(dir / "m.json"), ParseError);
}
