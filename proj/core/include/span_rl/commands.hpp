#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "span_rl/config.hpp"
#include "span_rl/metrics.hpp"

namespace span_rl {

// Exit statuses of the command layer.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // training fault or runtime failure
inline constexpr int kExitUsage = 2;    // bad config, arguments or inputs

struct CommandOptions {
  std::optional<std::string> out;    // overrides config and SPAN_RL_OUT
  std::optional<std::string> seeds;  // overrides [run] seeds
  int parallel = 1;                  // concurrent seed workers
  bool quiet = false;
};

// Output directory: --out, then [run] out, then $SPAN_RL_OUT, then "runs".
std::filesystem::path resolve_output_dir(const RunConfig& cfg, const CommandOptions& opts);

// Runs one seed of the configured experiment and writes
// curve_seed<k>.csv, summary_seed<k>.json and checkpoint_seed<k>.bin into `dir`.
RunSummary train_seed(const RunConfig& cfg, std::uint64_t seed, const std::filesystem::path& dir);

int cmd_train(const std::filesystem::path& config, const CommandOptions& opts, std::ostream& out, std::ostream& err);
int cmd_sweep(const std::filesystem::path& config, const CommandOptions& opts, std::ostream& out, std::ostream& err);
int cmd_report(const std::filesystem::path& results_dir, std::ostream& out, std::ostream& err);
int cmd_dataset(const std::filesystem::path& config, const CommandOptions& opts, std::ostream& out, std::ostream& err);

struct EvaluateOptions {
  std::optional<std::string> env;  // defaults to the checkpoint's env
  int episodes = 30;
  std::uint64_t seed = 0;
};
int cmd_evaluate(const std::filesystem::path& checkpoint, const EvaluateOptions& opts, std::ostream& out,
                 std::ostream& err);

// ---- report building blocks -------------------------------------------------

struct ReportGroup {
  std::string env, algo, net, fingerprint;
  std::vector<RunSummary> runs;
};

// Groups summaries by (env, algo, net). Throws UsageError when one group
// mixes fingerprints.
std::vector<ReportGroup> group_summaries(std::vector<RunSummary> runs);

// "201k (95%)" or "--- (0%)".
std::string format_efficiency_cell(const AggregateResult& r);

// Text tables in the layout of the sample-efficiency and anytime tables.
std::string render_report(const std::vector<ReportGroup>& groups);

}  // namespace span_rl
