#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

#include "abbrx/error.hpp"
#include "abbrx/eval.hpp"
#include "abbrx/rng.hpp"
#include "support.hpp"

using namespace abbrx;
using abbrx::testing::TempDir;

namespace {

AbbrevResult result(const std::string& abbrev, std::size_t correct, std::size_t total,
                    std::size_t senses = 2) {
  AbbrevResult r{abbrev, senses, {}};
  for (std::size_t i = 0; i < total; ++i) r.pairs.push_back({i < correct ? "a" : "b", "a"});
  return r;
}

// Brute-force two-sided p over all 2^n sign assignments of average ranks.
double oracle_wilcoxon(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> d;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::abs(a[i] - b[i]) > 1e-12) d.push_back(a[i] - b[i]);
  const std::size_t n = d.size();
  if (n == 0) return 1.0;
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n; ++i) {
    double less = 0.0, equal = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (std::abs(std::abs(d[j]) - std::abs(d[i])) <= 1e-12)
        equal += 1.0;
      else if (std::abs(d[j]) < std::abs(d[i]))
        less += 1.0;
    }
    rank[i] = less + (equal + 1.0) / 2.0;
  }
  double w = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (d[i] > 0) w += rank[i];
  std::size_t le = 0, ge = 0;
  for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (mask >> i & 1) s += rank[i];
    le += s <= w + 1e-9;
    ge += s >= w - 1e-9;
  }
  const double total = std::ldexp(1.0, static_cast<int>(n));
  return std::min(1.0, 2.0 * std::min(le, ge) / total);
}

ModelMetrics metrics(const std::string& name, const std::vector<double>& acc) {
  ModelMetrics m{name, 0.0, 0.0, {}};
  double sum = 0.0;
  for (std::size_t i = 0; i < acc.size(); ++i) {
    m.per_abbrev.push_back({"ab" + std::to_string(i), acc[i], acc[i], 10});
    sum += acc[i];
  }
  m.macro = m.micro = sum / static_cast<double>(acc.size());
  return m;
}

}  // namespace

TEST(Accuracy, Examples) {
  const std::vector<AbbrevResult> all_right = {result("x", 5, 5), result("y", 3, 3)};
  EXPECT_DOUBLE_EQ(micro_accuracy(all_right), 1.0);
  EXPECT_DOUBLE_EQ(macro_accuracy(all_right), 1.0);
  const std::vector<AbbrevResult> split = {result("x", 9, 10), result("y", 1, 10)};
  EXPECT_DOUBLE_EQ(micro_accuracy(split), 0.5);
  EXPECT_DOUBLE_EQ(macro_accuracy(split), 0.5);
  const std::vector<AbbrevResult> uneven = {result("x", 9, 10), result("y", 0, 30)};
  EXPECT_DOUBLE_EQ(micro_accuracy(uneven), 9.0 / 40.0);
  EXPECT_DOUBLE_EQ(macro_accuracy(uneven), 0.45);
}

TEST(Accuracy, SingleSenseExcluded) {
  const std::vector<AbbrevResult> rs = {result("x", 9, 10), result("mono", 0, 50, 1)};
  EXPECT_DOUBLE_EQ(micro_accuracy(rs), 0.9);
  EXPECT_DOUBLE_EQ(macro_accuracy(rs), 0.9);
  const std::vector<AbbrevResult> only = {result("mono", 1, 2, 1)};
  EXPECT_THROW(micro_accuracy(only), InvalidArgument);
  EXPECT_THROW(macro_accuracy(std::vector<AbbrevResult>{}), InvalidArgument);
}

TEST(Accuracy, MacroEqualsMicroForEqualCounts) {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.index(30);
    std::vector<AbbrevResult> rs;
    for (std::size_t k = 0; k < 1 + rng.index(8); ++k) rs.push_back(result("a" + std::to_string(k), rng.index(n + 1), n));
    EXPECT_NEAR(macro_accuracy(rs), micro_accuracy(rs), 1e-12);
    if (rs.size() == 1) EXPECT_DOUBLE_EQ(macro_accuracy(rs), micro_accuracy(rs));
  }
}

TEST(Bootstrap, ConstantOutcomesExact) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    EXPECT_EQ(bootstrap_mean(std::vector<bool>(17, true), 999, s), 1.0);
    EXPECT_EQ(bootstrap_mean(std::vector<bool>(17, false), 999, s), 0.0);
  }
  EXPECT_THROW(bootstrap_mean({}, 999, 0), InvalidArgument);
}

TEST(Bootstrap, HalfCorrectNearHalf) {
  std::vector<bool> o(100);
  for (std::size_t i = 0; i < 100; ++i) o[i] = i % 2;
  for (std::uint64_t s = 0; s < 50; ++s) EXPECT_NEAR(bootstrap_mean(o, 999, s), 0.5, 0.02);
  EXPECT_EQ(bootstrap_mean(o, 999, 3), bootstrap_mean(o, 999, 3));
}

TEST(Wilcoxon, Examples) {
  const std::vector<double> a = {0.3, 0.5, 0.9}, same = a;
  EXPECT_DOUBLE_EQ(wilcoxon_signed_rank(a, same), 1.0);
  const std::vector<double> x = {1, 2, 3, 4, 5}, y = {0, 0, 0, 0, 0};
  const auto r = wilcoxon_test(x, y);
  EXPECT_TRUE(r.exact);
  EXPECT_EQ(r.n, 5u);
  EXPECT_DOUBLE_EQ(r.w_plus, 15.0);
  EXPECT_DOUBLE_EQ(r.p_value, 0.0625);
  EXPECT_DOUBLE_EQ(wilcoxon_signed_rank(y, x), 0.0625);
  const std::vector<double> shorter = {1.0};
  EXPECT_THROW(wilcoxon_signed_rank(a, shorter), InvalidArgument);
}

TEST(Wilcoxon, MatchesBruteForceUpToTwelve) {
  Rng rng(2);
  for (int trial = 0; trial < 400; ++trial) {
    const std::size_t n = 1 + rng.index(12);
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      // Coarse grid to provoke ties and zero differences.
      a[i] = static_cast<double>(rng.index(6)) / 5.0;
      b[i] = static_cast<double>(rng.index(6)) / 5.0;
    }
    const auto r = wilcoxon_test(a, b);
    EXPECT_NEAR(r.p_value, oracle_wilcoxon(a, b), 1e-12) << "trial " << trial;
    EXPECT_GT(r.p_value, 0.0);
    EXPECT_LE(r.p_value, 1.0);
  }
}

TEST(Wilcoxon, NormalApproximationAtBoundaryTail) {
  // n = 12 untied differences: ranks 1..12; the sign pattern sets W+.
  // Compared over the tail where the test decides (exact p <= 0.15).
  std::size_t compared = 0;
  for (std::size_t mask = 0; mask < 4096; ++mask) {
    std::vector<double> a(12), b(12, 0.0);
    for (std::size_t i = 0; i < 12; ++i) a[i] = (mask >> i & 1 ? 1.0 : -1.0) * static_cast<double>(i + 1);
    const auto exact = wilcoxon_test(a, b);
    if (exact.p_value > 0.15) continue;
    const auto approx = wilcoxon_test(a, b, 0);
    EXPECT_FALSE(approx.exact);
    EXPECT_NEAR(approx.p_value, exact.p_value, 0.005) << "W+ " << exact.w_plus;
    ++compared;
  }
  EXPECT_GT(compared, 200u);
}

TEST(Wilcoxon, LargeSampleUsesApproximation) {
  Rng rng(3);
  std::vector<double> a(40), b(40);
  for (std::size_t i = 0; i < 40; ++i) {
    a[i] = rng.uniform();
    b[i] = a[i] + rng.uniform(-0.1, 0.3);
  }
  const auto r = wilcoxon_test(a, b);
  EXPECT_FALSE(r.exact);
  EXPECT_GT(r.p_value, 0.0);
  EXPECT_LT(r.p_value, 0.01);
}

TEST(Summarize, MatchesRawPairs) {
  const std::vector<AbbrevResult> rs = {result("x", 7, 10), result("y", 2, 4), result("mono", 1, 1, 1)};
  const auto m = summarize("full-local", rs, 4);
  EXPECT_EQ(m.model, "full-local");
  EXPECT_DOUBLE_EQ(m.micro, 9.0 / 14.0);
  EXPECT_DOUBLE_EQ(m.macro, (0.7 + 0.5) / 2.0);
  std::map<std::string, AbbrevMetric> by;
  for (const auto& a : m.per_abbrev) by[a.abbrev] = a;
  EXPECT_DOUBLE_EQ(by.at("x").accuracy, 0.7);
  EXPECT_EQ(by.at("x").n, 10u);
  EXPECT_NEAR(by.at("x").bootstrap_mean, 0.7, 0.05);
  EXPECT_FALSE(by.contains("mono"));
}

TEST(Metrics, JsonRoundTrip) {
  const std::vector<AbbrevResult> rs = {result("x", 7, 10), result("y", 2, 4)};
  const auto m = summarize("control-global", rs, 9);
  const auto back = metrics_from_json(metrics_to_json(m));
  EXPECT_EQ(back.model, m.model);
  EXPECT_EQ(back.macro, m.macro);
  EXPECT_EQ(back.micro, m.micro);
  ASSERT_EQ(back.per_abbrev.size(), m.per_abbrev.size());
  for (std::size_t i = 0; i < m.per_abbrev.size(); ++i) {
    EXPECT_EQ(back.per_abbrev[i].abbrev, m.per_abbrev[i].abbrev);
    EXPECT_EQ(back.per_abbrev[i].accuracy, m.per_abbrev[i].accuracy);
    EXPECT_EQ(back.per_abbrev[i].bootstrap_mean, m.per_abbrev[i].bootstrap_mean);
  }
  EXPECT_THROW(metrics_from_json("[1,2"), ParseError);
}

TEST(Histogram, FivePointBuckets) {
  EXPECT_EQ(histogram_bucket(0.0), 0);
  EXPECT_EQ(histogram_bucket(0.024), 0);
  EXPECT_EQ(histogram_bucket(0.026), 5);
  EXPECT_EQ(histogram_bucket(-0.024), 0);
  EXPECT_EQ(histogram_bucket(-0.026), -5);
  EXPECT_EQ(histogram_bucket(0.31), 30);
  EXPECT_EQ(histogram_bucket(1.0), 100);
  EXPECT_EQ(histogram_bucket(-1.0), -100);
}

TEST(Compare, SymmetricPairwiseAndHistogramTotals) {
  Rng rng(4);
  std::vector<ModelMetrics> ms;
  for (int k = 0; k < 3; ++k) {
    std::vector<double> acc(15);
    for (auto& x : acc) x = static_cast<double>(rng.index(11)) / 10.0;
    ms.push_back(metrics("m" + std::to_string(k), acc));
  }
  const auto report = compare_models(ms);
  ASSERT_EQ(report.pairwise.size(), 9u);
  std::map<std::pair<std::string, std::string>, PairwiseEntry> by;
  for (const auto& e : report.pairwise) by[{e.model_a, e.model_b}] = e;
  for (const auto& a : ms)
    for (const auto& b : ms) {
      const auto& ab = by.at({a.model, b.model});
      const auto& ba = by.at({b.model, a.model});
      EXPECT_NEAR(ab.macro_delta, -ba.macro_delta, 1e-12);
      EXPECT_DOUBLE_EQ(ab.p_value, ba.p_value);
      EXPECT_GT(ab.p_value, 0.0);
      EXPECT_LE(ab.p_value, 1.0);
      EXPECT_EQ(ab.shared, 15u);
      if (a.model == b.model) {
        EXPECT_EQ(ab.macro_delta, 0.0);
        EXPECT_EQ(ab.p_value, 1.0);
      }
    }
  std::map<std::pair<std::string, std::string>, std::size_t> totals;
  for (const auto& h : report.histogram) {
    totals[{h.model_a, h.model_b}] += h.count;
    EXPECT_EQ(h.center_percent % 5, 0);
  }
  EXPECT_EQ(totals.size(), 3u);
  for (const auto& [pair, n] : totals) EXPECT_EQ(n, 15u);
}

TEST(Compare, EmitReportFiles) {
  TempDir dir;
  const std::vector<ModelMetrics> ms = {metrics("a", {0.5, 1.0, 0.25}), metrics("b", {0.5, 0.75, 0.0})};
  emit_report(compare_models(ms), dir.path());
  const auto j = nlohmann::json::parse(abbrx::testing::read_text(dir / "report.json"));
  EXPECT_EQ(j["models"].size(), 2u);
  EXPECT_EQ(j["pairwise"].size(), 4u);
  EXPECT_NEAR(j["models"][0]["macro"].get<double>(), 1.75 / 3.0, 1e-12);
  const auto csv = abbrx::testing::read_text(dir / "pairwise.csv");
  EXPECT_NE(csv.find("model_a,model_b,macro_delta,micro_delta,p_value,shared"), std::string::npos);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 6);
  const auto hist = abbrx::testing::read_text(dir / "histogram.csv");
  EXPECT_NE(hist.find("b,a,-25,2"), std::string::npos);
  EXPECT_NE(hist.find("b,a,0,1"), std::string::npos);
}
