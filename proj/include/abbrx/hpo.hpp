#pragma once

// One-dimensional Tree-structured Parzen Estimator for the sampling temperature.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace abbrx {

struct Trial {
  std::size_t index = 0;
  double value = 0.0;      // the temperature tried
  double objective = 0.0;  // validation loss; +inf when the objective failed

  bool operator==(const Trial&) const = default;
};

struct TpeConfig {
  double lower = 0.5;
  double upper = 2.0;
  std::size_t iterations = 15;
  std::size_t startup_trials = 5;
  double gamma = 0.25;
  std::size_t candidates = 24;
  bool log_scale = true;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Next value to evaluate. Quasi-random while fewer than startup_trials
/// trials exist; afterwards the candidate (drawn from the good-trial Parzen
/// density) with the largest good/bad density ratio. Deterministic in
/// (trials, config); always inside [lower, upper].
double tpe_suggest(std::span<const Trial> trials, const TpeConfig& config);

struct OptimizationResult {
  double best_value = 0.0;
  double best_objective = 0.0;
  std::vector<Trial> trials;
};

/// Runs exactly config.iterations evaluations. Non-finite objectives are
/// recorded as +inf.
OptimizationResult optimize_temperature(const std::function<double(double)>& objective,
                                        const TpeConfig& config);

/// Trial history JSONL: {"abbrev", "trial", "T", "loss"} (loss null when infinite).
std::string trials_to_jsonl(const std::string& abbrev, std::span<const Trial> trials);

}  // namespace abbrx
