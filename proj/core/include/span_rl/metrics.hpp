#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace span_rl {

// Statistics of one evaluation: returns of every episode at a global step.
struct EvalRecord {
  std::uint64_t step = 0;
  std::vector<double> returns;
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
};

EvalRecord make_eval_record(std::uint64_t step, std::vector<double> returns);

// Fractions of the expert target used for sample-efficiency thresholds.
inline constexpr double kThresholdFractions[] = {0.25, 0.50, 0.75, 0.95, 1.00};
// Fractions of the training budget used for anytime checkpoints.
inline constexpr double kCheckpointFractions[] = {0.10, 0.25, 0.50, 0.75, 0.95, 1.00};

inline constexpr double kDefaultNegativeFloor = -500.0;

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

struct RunSummary {
  static constexpr int kSchemaVersion = 1;

  std::uint64_t seed = 0;
  std::string env;
  std::string algo;
  std::string net;
  std::string fingerprint;
  std::uint64_t total_steps = 0;
  std::size_t parameter_count = 0;
  std::vector<EvalRecord> curve;
  // threshold fraction -> first step of the sustained window (none if never).
  std::map<double, std::optional<std::uint64_t>> solve_steps;
  std::map<double, double> threshold_returns;
  // budget fraction -> (mean, std) of the record in effect at that step.
  std::map<double, MeanStd> checkpoints;
  double wall_clock_seconds = 0.0;
  // Offline runs: normalized score against the dataset anchors.
  std::optional<double> normalized_score;

  double final_mean() const { return curve.empty() ? 0.0 : curve.back().mean; }
};

// Earliest window of `window` consecutive records whose means are all
// >= target; returns the step of the window's first record.
std::optional<std::uint64_t> sustained_solve_step(std::span<const EvalRecord> curve, double target, int window = 5);

// Absolute return for each threshold fraction. Non-negative targets scale
// linearly (f * target). Negative targets use target / f clamped below by
// `floor`, which maps Acrobot's 50% to -200 and 100% to -100.
std::map<double, double> threshold_targets(double expert_target, double floor = kDefaultNegativeFloor);

struct AggregateResult {
  std::optional<double> median_step;  // over solving runs only
  double success_rate = 0.0;          // fraction of runs that solved
  std::size_t runs = 0;
};

// Throws UsageError on an empty input.
AggregateResult aggregate(std::span<const RunSummary> runs, double threshold_fraction);

// For each budget fraction: mean over runs of the record mean in effect at
// fraction * budget (latest record with step <= that point), and the
// population std of those per-run means.
std::map<double, MeanStd> anytime_table(std::span<const RunSummary> runs, std::uint64_t budget);

// Fills solve_steps, threshold_returns and checkpoints from the curve.
void finalize_summary(RunSummary& summary, double expert_target, double negative_floor = kDefaultNegativeFloor);

nlohmann::json to_json(const RunSummary& s);
RunSummary summary_from_json(const nlohmann::json& j);

// CSV curve: header `step,mean_return,std_return,ep_returns_json`, preceded by
// a `#` comment line carrying the schema version and config fingerprint.
std::string curve_csv(std::span<const EvalRecord> curve, const std::string& fingerprint);

// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

}  // namespace span_rl
