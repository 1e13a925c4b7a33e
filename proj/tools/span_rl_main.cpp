#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "span_rl/commands.hpp"

namespace {

struct CommonFlags {
  std::string config;
  std::string out;
  std::string seeds;
  int parallel = 1;
  bool quiet = false;

  span_rl::CommandOptions options() const {
    span_rl::CommandOptions o;
    if (!out.empty()) o.out = out;
    if (!seeds.empty()) o.seeds = seeds;
    o.parallel = parallel;
    o.quiet = quiet;
    return o;
  }
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "Run configuration file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", f.out, "Output directory (overrides config and SPAN_RL_OUT)");
  cmd->add_option("--seeds", f.seeds, "Seed list, e.g. 0-4 or 0,3,7");
  cmd->add_option("--parallel", f.parallel, "Concurrent seed workers")->check(CLI::PositiveNumber);
  cmd->add_flag("-q,--quiet", f.quiet, "Suppress progress output");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spline-network reinforcement learning experiments"};
  app.require_subcommand(1);

  CommonFlags train_flags, sweep_flags, dataset_flags;
  auto* train = app.add_subcommand("train", "Train every configured seed");
  add_common(train, train_flags);
  auto* sweep = app.add_subcommand("sweep", "Architecture sweep, one axis at a time");
  add_common(sweep, sweep_flags);
  auto* dataset = app.add_subcommand("dataset", "Generate an offline dataset from a checkpoint");
  add_common(dataset, dataset_flags);

  std::string report_dir;
  auto* report = app.add_subcommand("report", "Aggregate run summaries into tables");
  report->add_option("dir", report_dir, "Results directory")->required();

  std::string checkpoint, eval_env;
  span_rl::EvaluateOptions eval_opts;
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a saved policy");
  evaluate->add_option("checkpoint", checkpoint, "Checkpoint file")->required();
  evaluate->add_option("--env", eval_env, "Environment (defaults to the checkpoint's)");
  evaluate->add_option("--episodes", eval_opts.episodes, "Evaluation episodes")->check(CLI::PositiveNumber);
  evaluate->add_option("--seed", eval_opts.seed, "Reset seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : span_rl::kExitUsage;
  }

  if (*train) return span_rl::cmd_train(train_flags.config, train_flags.options(), std::cout, std::cerr);
  if (*sweep) return span_rl::cmd_sweep(sweep_flags.config, sweep_flags.options(), std::cout, std::cerr);
  if (*dataset) return span_rl::cmd_dataset(dataset_flags.config, dataset_flags.options(), std::cout, std::cerr);
  if (*report) return span_rl::cmd_report(report_dir, std::cout, std::cerr);
  if (!eval_env.empty()) eval_opts.env = eval_env;
  return span_rl::cmd_evaluate(checkpoint, eval_opts, std::cout, std::cerr);
}
