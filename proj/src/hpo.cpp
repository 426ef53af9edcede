#include "abbrx/hpo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <nlohmann/json.hpp>

#include "abbrx/error.hpp"
#include "abbrx/rng.hpp"

namespace abbrx {
namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// Adaptive Parzen estimator: one truncated Gaussian per point plus a wide
// prior component at the interval midpoint. Each bandwidth is the larger gap
// to its sorted neighbours, clipped to [range / min(100, n + 1), range].
class ParzenDensity {
 public:
  ParzenDensity(const std::vector<double>& points, double lo, double hi) : lo_(lo), hi_(hi) {
    const double range = hi - lo;
    const double prior = 0.5 * (lo + hi);
    std::vector<std::pair<double, bool>> sorted;  // (center, is_prior)
    for (double p : points) sorted.emplace_back(p, false);
    sorted.emplace_back(prior, true);
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    const double min_sd =
        range / std::min(100.0, static_cast<double>(points.size()) + 1.0);
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      double sd = range;
      if (!sorted[i].second) {
        const double left = i > 0 ? sorted[i].first - sorted[i - 1].first : 0.0;
        const double right = i + 1 < sorted.size() ? sorted[i + 1].first - sorted[i].first : 0.0;
        sd = std::clamp(std::max(left, right), min_sd, range);
      }
      centers_.push_back(sorted[i].first);
      sds_.push_back(sd);
      mass_.push_back(normal_cdf((hi_ - sorted[i].first) / sd) - normal_cdf((lo_ - sorted[i].first) / sd));
    }
  }

  double pdf(double x) const {
    const double weight = 1.0 / static_cast<double>(centers_.size());
    double p = 0.0;
    for (std::size_t i = 0; i < centers_.size(); ++i) {
      const double z = (x - centers_[i]) / sds_[i];
      p += weight * std::exp(-0.5 * z * z) / (sds_[i] * std::sqrt(2.0 * std::numbers::pi) * mass_[i]);
    }
    return p;
  }

  double sample(Rng& rng) const {
    const std::size_t k = rng.index(centers_.size());
    for (int attempt = 0; attempt < 64; ++attempt) {
      const double x = centers_[k] + sds_[k] * rng.normal();
      if (x >= lo_ && x <= hi_) return x;
    }
    return std::clamp(centers_[k], lo_, hi_);
  }

 private:
  double lo_, hi_;
  std::vector<double> centers_;
  std::vector<double> sds_;
  std::vector<double> mass_;
};

}  // namespace

void TpeConfig::validate() const {
  if (!(lower > 0.0 && lower < upper) || !std::isfinite(upper))
    throw ConfigError("tpe bounds must satisfy 0 < lower < upper");
  if (startup_trials < 1 || iterations < startup_trials)
    throw ConfigError("tpe requires iterations >= startup_trials >= 1");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("tpe gamma must lie in (0, 1)");
  if (candidates < 1) throw ConfigError("tpe candidates must be >= 1");
}

double tpe_suggest(std::span<const Trial> trials, const TpeConfig& config) {
  config.validate();
  const auto to_space = [&](double v) { return config.log_scale ? std::log(v) : v; };
  const auto from_space = [&](double s) {
    return std::clamp(config.log_scale ? std::exp(s) : s, config.lower, config.upper);
  };
  const double lo = to_space(config.lower);
  const double hi = to_space(config.upper);

  if (trials.size() < config.startup_trials) {
    // Golden-ratio sequence with a seed-dependent offset.
    const double offset = Rng(derive_seed(config.seed, "tpe-startup")).uniform();
    const double frac =
        std::fmod(offset + static_cast<double>(trials.size()) * 0.6180339887498949, 1.0);
    return from_space(lo + frac * (hi - lo));
  }

  std::vector<const Trial*> finite, failed;
  for (const auto& t : trials) (std::isfinite(t.objective) ? finite : failed).push_back(&t);
  std::stable_sort(finite.begin(), finite.end(), [](const Trial* a, const Trial* b) {
    return a->objective < b->objective;
  });
  std::size_t n_good = static_cast<std::size_t>(
      std::ceil(config.gamma * static_cast<double>(finite.size())));
  n_good = std::min(std::max<std::size_t>(n_good, finite.empty() ? 0 : 1), finite.size());

  std::vector<double> good, bad;
  for (std::size_t i = 0; i < finite.size(); ++i)
    (i < n_good ? good : bad).push_back(to_space(finite[i]->value));
  for (const auto* t : failed) bad.push_back(to_space(t->value));

  const ParzenDensity l(good, lo, hi);
  const ParzenDensity g(bad, lo, hi);
  Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(trials.size())));
  double best = 0.0;
  double best_ratio = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < config.candidates; ++c) {
    const double x = l.sample(rng);
    const double ratio = std::log(l.pdf(x)) - std::log(g.pdf(x));
    if (ratio > best_ratio || (ratio == best_ratio && x < best)) {
      best_ratio = ratio;
      best = x;
    }
  }
  return from_space(best);
}

OptimizationResult optimize_temperature(const std::function<double(double)>& objective,
                                        const TpeConfig& config) {
  config.validate();
  OptimizationResult result;
  for (std::size_t i = 0; i < config.iterations; ++i) {
    const double value = tpe_suggest(result.trials, config);
    double y = objective(value);
    if (!std::isfinite(y)) y = std::numeric_limits<double>::infinity();
    result.trials.push_back({i, value, y});
  }
  const Trial* best = &result.trials.front();
  for (const auto& t : result.trials)
    if (t.objective < best->objective) best = &t;
  result.best_value = best->value;
  result.best_objective = best->objective;
  return result;
}

std::string trials_to_jsonl(const std::string& abbrev, std::span<const Trial> trials) {
  std::string out;
  for (const auto& t : trials) {
    nlohmann::json j = {{"abbrev", abbrev}, {"trial", t.index}, {"T", t.value}};
    if (std::isfinite(t.objective))
      j["loss"] = t.objective;
    else
      j["loss"] = nullptr;
    out += j.dump();
    out.push_back('\n');
  }
  return out;
}

}  // namespace abbrx
