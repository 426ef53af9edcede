#include "abbrx/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <nlohmann/json.hpp>

#include "abbrx/error.hpp"
#include "abbrx/io.hpp"
#include "abbrx/rng.hpp"

namespace abbrx {
namespace {

constexpr double kTieTolerance = 1e-12;

bool in_pool(const AbbrevResult& r) { return r.num_expansions >= 2; }

}  // namespace

std::size_t AbbrevResult::correct() const {
  return static_cast<std::size_t>(std::count_if(
      pairs.begin(), pairs.end(), [](const PredictionPair& p) { return p.predicted == p.truth; }));
}

double AbbrevResult::accuracy() const {
  return pairs.empty() ? 0.0 : static_cast<double>(correct()) / static_cast<double>(pairs.size());
}

std::vector<bool> AbbrevResult::outcomes() const {
  std::vector<bool> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(p.predicted == p.truth);
  return out;
}

double micro_accuracy(std::span<const AbbrevResult> results) {
  std::size_t correct = 0, total = 0;
  for (const auto& r : results) {
    if (!in_pool(r)) continue;
    correct += r.correct();
    total += r.pairs.size();
  }
  if (total == 0) throw InvalidArgument("micro_accuracy: no samples");
  return static_cast<double>(correct) / static_cast<double>(total);
}

double macro_accuracy(std::span<const AbbrevResult> results) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& r : results) {
    if (!in_pool(r) || r.pairs.empty()) continue;
    sum += r.accuracy();
    ++count;
  }
  if (count == 0) throw InvalidArgument("macro_accuracy: no abbreviations with samples");
  return sum / static_cast<double>(count);
}

double bootstrap_mean(const std::vector<bool>& outcomes, std::size_t resamples, std::uint64_t seed) {
  if (outcomes.empty()) throw InvalidArgument("bootstrap_mean: no pairs");
  if (resamples == 0) throw InvalidArgument("bootstrap_mean: resamples must be > 0");
  const std::size_t n = outcomes.size();
  const std::size_t all = static_cast<std::size_t>(std::count(outcomes.begin(), outcomes.end(), true));
  // Constant inputs: every resample has the same accuracy.
  if (all == 0 || all == n) return static_cast<double>(all) / static_cast<double>(n);
  Rng rng(seed);
  double total = 0.0;
  for (std::size_t r = 0; r < resamples; ++r) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) hits += outcomes[rng.index(n)] ? 1 : 0;
    total += static_cast<double>(hits) / static_cast<double>(n);
  }
  return total / static_cast<double>(resamples);
}

WilcoxonResult wilcoxon_test(std::span<const double> a, std::span<const double> b,
                             std::size_t exact_limit) {
  if (a.size() != b.size()) throw InvalidArgument("wilcoxon: paired samples differ in length");
  struct Diff {
    double magnitude;
    bool positive;
  };
  std::vector<Diff> diffs;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    if (std::abs(d) <= kTieTolerance) continue;
    diffs.push_back({std::abs(d), d > 0.0});
  }
  WilcoxonResult res;
  res.n = diffs.size();
  if (res.n == 0) return res;

  std::sort(diffs.begin(), diffs.end(),
            [](const Diff& x, const Diff& y) { return x.magnitude < y.magnitude; });
  // Doubled average ranks are integers: tied block [i, j) gets (i + 1) + j.
  std::vector<long long> rank2(res.n);
  double tie_term = 0.0;
  for (std::size_t i = 0; i < res.n;) {
    std::size_t j = i + 1;
    while (j < res.n && diffs[j].magnitude - diffs[i].magnitude <= kTieTolerance) ++j;
    for (std::size_t k = i; k < j; ++k) rank2[k] = static_cast<long long>(i + 1 + j);
    const double t = static_cast<double>(j - i);
    tie_term += t * t * t - t;
    i = j;
  }
  long long w2 = 0;
  for (std::size_t i = 0; i < res.n; ++i)
    if (diffs[i].positive) w2 += rank2[i];
  res.w_plus = static_cast<double>(w2) / 2.0;

  const double n = static_cast<double>(res.n);
  if (res.n <= exact_limit) {
    res.exact = true;
    const long long total = std::accumulate(rank2.begin(), rank2.end(), 0LL);
    std::vector<double> ways(static_cast<std::size_t>(total) + 1, 0.0);
    ways[0] = 1.0;
    long long reach = 0;
    for (long long r : rank2) {
      reach += r;
      for (long long s = reach; s >= r; --s)
        ways[static_cast<std::size_t>(s)] += ways[static_cast<std::size_t>(s - r)];
    }
    double lower = 0.0, upper = 0.0;
    for (long long s = 0; s <= total; ++s) {
      if (s <= w2) lower += ways[static_cast<std::size_t>(s)];
      if (s >= w2) upper += ways[static_cast<std::size_t>(s)];
    }
    const double outcomes = std::ldexp(1.0, static_cast<int>(res.n));
    res.p_value = std::min(1.0, 2.0 * std::min(lower, upper) / outcomes);
  } else {
    res.exact = false;
    const double mean = n * (n + 1.0) / 4.0;
    const double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    if (var <= 0.0) {
      res.p_value = 1.0;
    } else {
      const double z = std::max(0.0, std::abs(res.w_plus - mean) - 0.5) / std::sqrt(var);
      res.p_value = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
    }
  }
  return res;
}

double wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b) {
  return wilcoxon_test(a, b).p_value;
}

ModelMetrics summarize(const std::string& model, std::span<const AbbrevResult> results,
                       std::uint64_t seed, std::size_t resamples) {
  ModelMetrics m;
  m.model = model;
  m.micro = micro_accuracy(results);
  m.macro = macro_accuracy(results);
  for (const auto& r : results) {
    if (!in_pool(r) || r.pairs.empty()) continue;
    m.per_abbrev.push_back({r.abbrev, r.accuracy(),
                            bootstrap_mean(r.outcomes(), resamples, derive_seed(seed, r.abbrev)),
                            r.pairs.size()});
  }
  return m;
}

std::string metrics_to_json(const ModelMetrics& m) {
  nlohmann::ordered_json per = nlohmann::ordered_json::array();
  for (const auto& a : m.per_abbrev) {
    nlohmann::ordered_json row;
    row["abbrev"] = a.abbrev;
    row["acc"] = a.accuracy;
    row["bootstrap_mean"] = a.bootstrap_mean;
    row["n"] = a.n;
    per.push_back(std::move(row));
  }
  nlohmann::ordered_json j;
  j["model"] = m.model;
  j["macro"] = m.macro;
  j["micro"] = m.micro;
  j["per_abbrev"] = std::move(per);
  return j.dump(2) + "\n";
}

namespace {

ModelMetrics parse_metrics(const std::string& text, const std::string& source) {
  try {
    const auto j = nlohmann::json::parse(text);
    ModelMetrics m;
    m.model = j.at("model").get<std::string>();
    m.macro = j.at("macro").get<double>();
    m.micro = j.at("micro").get<double>();
    for (const auto& a : j.at("per_abbrev"))
      m.per_abbrev.push_back({a.at("abbrev").get<std::string>(), a.at("acc").get<double>(),
                              a.at("bootstrap_mean").get<double>(), a.at("n").get<std::size_t>()});
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(source, 0, e.what());
  }
}

}  // namespace

ModelMetrics metrics_from_json(const std::string& text) { return parse_metrics(text, "<metrics>"); }

ModelMetrics load_metrics(const std::filesystem::path& path) {
  return parse_metrics(io::read_file(path), path.string());
}

int histogram_bucket(double delta) {
  return 5 * static_cast<int>(std::floor((delta * 100.0 + 2.5) / 5.0));
}

ComparisonReport compare_models(std::span<const ModelMetrics> models) {
  ComparisonReport report;
  report.models.assign(models.begin(), models.end());
  for (const auto& a : models) {
    for (const auto& b : models) {
      std::map<std::string, double> acc_b;
      for (const auto& r : b.per_abbrev) acc_b[r.abbrev] = r.accuracy;
      std::vector<double> xa, xb;
      for (const auto& r : a.per_abbrev)
        if (auto it = acc_b.find(r.abbrev); it != acc_b.end()) {
          xa.push_back(r.accuracy);
          xb.push_back(it->second);
        }
      PairwiseEntry e{a.model, b.model, 0.0, a.micro - b.micro, 1.0, xa.size()};
      if (!xa.empty()) {
        e.macro_delta = (std::accumulate(xa.begin(), xa.end(), 0.0) -
                         std::accumulate(xb.begin(), xb.end(), 0.0)) /
                        static_cast<double>(xa.size());
        e.p_value = wilcoxon_signed_rank(xa, xb);
      }
      report.pairwise.push_back(e);
    }
  }
  for (std::size_t i = 0; i < models.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      const auto& a = models[i];
      const auto& b = models[j];
      std::map<std::string, double> acc_b;
      for (const auto& r : b.per_abbrev) acc_b[r.abbrev] = r.accuracy;
      std::map<int, std::size_t> buckets;
      for (const auto& r : a.per_abbrev)
        if (auto it = acc_b.find(r.abbrev); it != acc_b.end())
          ++buckets[histogram_bucket(r.accuracy - it->second)];
      for (const auto& [center, count] : buckets)
        report.histogram.push_back({a.model, b.model, center, count});
    }
  }
  return report;
}

void emit_report(const ComparisonReport& report, const std::filesystem::path& dir) {
  nlohmann::ordered_json j;
  j["test"] = "two-sided Wilcoxon signed-rank on paired per-abbreviation accuracies";
  nlohmann::ordered_json models = nlohmann::ordered_json::array();
  for (const auto& m : report.models) {
    nlohmann::ordered_json row;
    row["model"] = m.model;
    row["macro"] = m.macro;
    row["micro"] = m.micro;
    row["abbrevs"] = m.per_abbrev.size();
    models.push_back(std::move(row));
  }
  j["models"] = std::move(models);
  nlohmann::ordered_json pairs = nlohmann::ordered_json::array();
  for (const auto& e : report.pairwise) {
    nlohmann::ordered_json row;
    row["model_a"] = e.model_a;
    row["model_b"] = e.model_b;
    row["macro_delta"] = e.macro_delta;
    row["micro_delta"] = e.micro_delta;
    row["p_value"] = e.p_value;
    row["shared"] = e.shared;
    pairs.push_back(std::move(row));
  }
  j["pairwise"] = std::move(pairs);
  io::write_atomic(dir / "report.json", j.dump(2) + "\n");

  std::string csv = "# two-sided Wilcoxon signed-rank test\nmodel_a,model_b,macro_delta,micro_delta,p_value,shared\n";
  for (const auto& e : report.pairwise)
    csv += e.model_a + "," + e.model_b + "," + io::format_double(e.macro_delta) + "," +
           io::format_double(e.micro_delta) + "," + io::format_double(e.p_value) + "," +
           std::to_string(e.shared) + "\n";
  io::write_atomic(dir / "pairwise.csv", csv);

  std::string hist = "model_a,model_b,bucket_percent,count\n";
  for (const auto& h : report.histogram)
    hist += h.model_a + "," + h.model_b + "," + std::to_string(h.center_percent) + "," +
            std::to_string(h.count) + "\n";
  io::write_atomic(dir / "histogram.csv", hist);
}

}  // namespace abbrx
