#include "span_rl/commands.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "span_rl/envs.hpp"
#include "span_rl/errors.hpp"
#include "span_rl/iql.hpp"
#include "span_rl/ppo.hpp"
#include "span_rl/sac.hpp"

namespace span_rl {
namespace fs = std::filesystem;
namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  os << text;
  if (!os) throw IoError("write to '" + path.string() + "' failed");
}

std::string seed_file(const char* stem, std::uint64_t seed, const char* ext) {
  return std::string(stem) + "_seed" + std::to_string(seed) + ext;
}

// Maps an exception to an exit status and prints it.
int report_failure(std::ostream& err, const std::string& context) {
  const std::string prefix = context.empty() ? "" : context + ": ";
  try {
    throw;
  } catch (const ConfigError& e) {
    err << prefix << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const UsageError& e) {
    err << prefix << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const IoError& e) {
    err << prefix << "i/o error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const TrainingFault& e) {
    err << prefix << "training fault: " << e.what() << "\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    err << prefix << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

// Runs jobs [0, n) on up to `workers` threads. Each job handles its own errors.
template <typename Fn>
void run_jobs(std::size_t n, int workers, Fn&& fn) {
  const std::size_t threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, workers)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

RunConfig load_with_overrides(const fs::path& path, const CommandOptions& opts) {
  RunConfig cfg = load_config(path);
  if (opts.seeds) cfg.seeds = parse_seed_list(*opts.seeds);
  if (opts.parallel < 1) throw UsageError("--parallel must be at least 1");
  return cfg;
}

std::string describe_solves(const RunSummary& s) {
  std::ostringstream os;
  for (const auto& [f, step] : s.solve_steps) {
    os << " " << format_double(f * 100) << "%=" << (step ? std::to_string(*step) : std::string("-"));
  }
  return os.str();
}

// Per-seed outcome shared by train and sweep.
struct SeedOutcome {
  int status = kExitOk;
  std::optional<RunSummary> summary;
};

SeedOutcome guarded_seed(const RunConfig& cfg, std::uint64_t seed, const fs::path& dir, std::mutex& log_mutex,
                         std::ostream& out, std::ostream& err, bool quiet) {
  SeedOutcome o;
  try {
    o.summary = train_seed(cfg, seed, dir);
    if (!quiet) {
      std::lock_guard lock(log_mutex);
      out << "seed " << seed << ": final mean " << format_double(o.summary->final_mean()) << describe_solves(*o.summary)
          << "\n";
    }
  } catch (...) {
    std::lock_guard lock(log_mutex);
    o.status = report_failure(err, "seed " + std::to_string(seed));
  }
  return o;
}

}  // namespace

fs::path resolve_output_dir(const RunConfig& cfg, const CommandOptions& opts) {
  if (opts.out && !opts.out->empty()) return *opts.out;
  if (!cfg.out.empty()) return cfg.out;
  if (const char* env = std::getenv("SPAN_RL_OUT"); env && *env) return env;
  return "runs";
}

RunSummary train_seed(const RunConfig& cfg, std::uint64_t seed, const fs::path& dir) {
  const std::string fingerprint = config_fingerprint(cfg);
  TrainOptions opts;
  opts.negative_floor = cfg.negative_floor;
  opts.fingerprint = fingerprint;

  TrainResult result;
  if (cfg.algo == "ppo") {
    result = ppo_train(cfg.env, cfg.actor_spec(), cfg.critic_spec(), cfg.ppo, seed, opts);
  } else if (cfg.algo == "sac") {
    opts.snapshot_step = cfg.total_steps / 2;
    result = sac_train(cfg.env, cfg.actor_spec(), cfg.critic_spec(), cfg.sac, seed, opts);
  } else if (cfg.algo == "iql") {
    if (cfg.iql_dataset.empty()) throw UsageError("iql runs need [iql] dataset = <file>");
    const OfflineDataset data = OfflineDataset::load(cfg.iql_dataset);
    if (canonical_env_name(data.metadata().env) != cfg.env) {
      throw UsageError("dataset was generated on " + data.metadata().env + ", config uses " + cfg.env);
    }
    IqlResult r = iql_train(data, cfg.actor_spec(), cfg.critic_spec(), cfg.value_spec(), cfg.iql, seed, opts);
    if (r.training_interactions != 0) throw InternalError("environment was stepped during offline training");
    result = std::move(r.train);
  } else {
    throw UsageError("unknown algorithm '" + cfg.algo + "'");
  }

  fs::create_directories(dir);
  write_text(dir / seed_file("curve", seed, ".csv"), curve_csv(result.summary.curve, fingerprint));
  write_text(dir / seed_file("summary", seed, ".json"), to_json(result.summary).dump(2) + "\n");
  nlohmann::json meta = {{"env", cfg.env},
                         {"algo", cfg.algo},
                         {"net", to_string(cfg.net)},
                         {"seed", seed},
                         {"fingerprint", fingerprint},
                         {"config", serialize_config(cfg)}};
  result.policy->save(dir / seed_file("checkpoint", seed, ".bin"), meta);
  if (result.snapshot) {
    meta["snapshot_step"] = opts.snapshot_step;
    result.snapshot->save(dir / seed_file("checkpoint", seed, "_mid.bin"), meta);
  }
  return result.summary;
}

int cmd_train(const fs::path& config, const CommandOptions& opts, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  fs::path dir;
  try {
    cfg = load_with_overrides(config, opts);
    dir = resolve_output_dir(cfg, opts);
    fs::create_directories(dir);
    write_text(dir / "config.ini", "# fingerprint " + config_fingerprint(cfg) + "\n" + serialize_config(cfg));
  } catch (...) {
    return report_failure(err, config.string());
  }
  if (!opts.quiet) {
    out << "training " << cfg.algo << "/" << to_string(cfg.net) << " on " << cfg.env << ", " << cfg.seeds.size()
        << " seed(s) -> " << dir.string() << "\n";
  }
  std::mutex log_mutex;
  std::vector<int> status(cfg.seeds.size(), kExitOk);
  run_jobs(cfg.seeds.size(), opts.parallel, [&](std::size_t i) {
    status[i] = guarded_seed(cfg, cfg.seeds[i], dir, log_mutex, out, err, opts.quiet).status;
  });
  return *std::max_element(status.begin(), status.end());
}

int cmd_sweep(const fs::path& config, const CommandOptions& opts, std::ostream& out, std::ostream& err) {
  RunConfig base;
  fs::path dir;
  struct Variant {
    std::string axis, value;
    RunConfig cfg;
  };
  std::vector<Variant> variants;
  try {
    base = load_with_overrides(config, opts);
    if (!base.sweep.empty() && base.net != NetKind::kSpan) throw ConfigError("sweep axes require net = span");
    dir = resolve_output_dir(base, opts);
    fs::create_directories(dir);
    for (auto v : base.sweep.nmodes) {
      Variant var{"nmodes", std::to_string(v), base};
      var.cfg.span.nmodes = v;
      variants.push_back(std::move(var));
    }
    for (auto v : base.sweep.nelems) {
      Variant var{"nelems", std::to_string(v), base};
      var.cfg.span.nelems = v;
      variants.push_back(std::move(var));
    }
    for (auto v : base.sweep.degree) {
      Variant var{"degree", std::to_string(v), base};
      var.cfg.span.degree = v;
      variants.push_back(std::move(var));
    }
    if (variants.empty()) variants.push_back({"base", "base", base});
  } catch (...) {
    return report_failure(err, config.string());
  }

  struct Job {
    std::size_t variant;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (std::size_t v = 0; v < variants.size(); ++v) {
    for (auto s : base.seeds) jobs.push_back({v, s});
  }
  if (!opts.quiet) out << "sweep: " << variants.size() << " variant(s) x " << base.seeds.size() << " seed(s)\n";

  std::mutex log_mutex;
  std::vector<SeedOutcome> outcomes(jobs.size());
  run_jobs(jobs.size(), opts.parallel, [&](std::size_t i) {
    const Variant& var = variants[jobs[i].variant];
    outcomes[i] = guarded_seed(var.cfg, jobs[i].seed, dir / (var.axis + "_" + var.value), log_mutex, out, err, opts.quiet);
  });

  std::ostringstream csv;
  csv << "# span_rl.sweep v1 fingerprint=" << config_fingerprint(base) << "\n";
  csv << "axis,value,seed,final_return\n";
  int status = kExitOk;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    status = std::max(status, outcomes[i].status);
    if (!outcomes[i].summary) continue;
    const Variant& var = variants[jobs[i].variant];
    csv << var.axis << ',' << var.value << ',' << jobs[i].seed << ',' << format_double(outcomes[i].summary->final_mean())
        << "\n";
  }
  try {
    write_text(dir / "sweep.csv", csv.str());
  } catch (...) {
    return report_failure(err, "sweep");
  }
  return status;
}

std::vector<ReportGroup> group_summaries(std::vector<RunSummary> runs) {
  std::map<std::tuple<std::string, std::string, std::string>, ReportGroup> groups;
  for (auto& r : runs) {
    ReportGroup& g = groups[{r.env, r.algo, r.net}];
    if (g.runs.empty()) {
      g.env = r.env;
      g.algo = r.algo;
      g.net = r.net;
      g.fingerprint = r.fingerprint;
    } else if (g.fingerprint != r.fingerprint) {
      throw UsageError("summaries for " + r.env + "/" + r.algo + "/" + r.net + " have mismatched config fingerprints (" +
                       g.fingerprint + " vs " + r.fingerprint + ")");
    }
    g.runs.push_back(std::move(r));
  }
  std::vector<ReportGroup> out;
  for (auto& [key, g] : groups) {
    std::sort(g.runs.begin(), g.runs.end(), [](const RunSummary& a, const RunSummary& b) { return a.seed < b.seed; });
    out.push_back(std::move(g));
  }
  return out;
}

std::string format_efficiency_cell(const AggregateResult& r) {
  char buf[64];
  const int rate = static_cast<int>(std::lround(r.success_rate * 100.0));
  if (r.median_step) {
    std::snprintf(buf, sizeof buf, "%.0fk (%d%%)", *r.median_step / 1000.0, rate);
  } else {
    std::snprintf(buf, sizeof buf, "--- (%d%%)", rate);
  }
  return buf;
}

namespace {

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s + " " : s + std::string(width - s.size(), ' ');
}

std::string percent_label(double f) { return format_double(f * 100.0) + "%"; }

}  // namespace

std::string render_report(const std::vector<ReportGroup>& groups) {
  std::ostringstream os;
  std::string env;
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const ReportGroup& g = groups[gi];
    if (g.env != env) {
      env = g.env;
      os << (gi ? "\n" : "") << "== " << env << " ==\n";
      // Sample efficiency for every method of this env.
      os << "\nSample efficiency: median steps to threshold (success rate)\n";
      os << pad("Method", 14);
      const auto& thresholds = g.runs.front().threshold_returns;
      for (double f : kThresholdFractions) {
        const auto it = thresholds.find(f);
        os << pad(percent_label(f) + (it != thresholds.end() ? " [" + format_double(it->second) + "]" : ""), 16);
      }
      os << "seeds\n";
      for (std::size_t j = gi; j < groups.size() && groups[j].env == env; ++j) {
        const ReportGroup& h = groups[j];
        os << pad(h.algo + "/" + h.net, 14);
        for (double f : kThresholdFractions) os << pad(format_efficiency_cell(aggregate(h.runs, f)), 16);
        os << h.runs.size() << "\n";
      }
      os << "\nAnytime performance: mean +- std across seeds\n";
      os << pad("Method", 14);
      for (double f : kCheckpointFractions) os << pad(percent_label(f), 14);
      os << "budget\n";
      for (std::size_t j = gi; j < groups.size() && groups[j].env == env; ++j) {
        const ReportGroup& h = groups[j];
        const std::uint64_t budget = h.runs.front().total_steps;
        const auto table = anytime_table(h.runs, budget);
        os << pad(h.algo + "/" + h.net, 14);
        for (double f : kCheckpointFractions) {
          char buf[64];
          if (const auto it = table.find(f); it != table.end()) {
            std::snprintf(buf, sizeof buf, "%.0f+-%.0f", it->second.mean, it->second.std);
          } else {
            std::snprintf(buf, sizeof buf, "---");
          }
          os << pad(buf, 14);
        }
        os << budget << "\n";
      }
      bool any_score = false;
      for (std::size_t j = gi; j < groups.size() && groups[j].env == env; ++j) {
        std::vector<double> scores;
        for (const auto& r : groups[j].runs) {
          if (r.normalized_score) scores.push_back(*r.normalized_score);
        }
        if (scores.empty()) continue;
        if (!any_score) os << "\nNormalized score: mean +- std across seeds\n";
        any_score = true;
        const EvalRecord agg = make_eval_record(0, scores);
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.3f+-%.3f", agg.mean, agg.std);
        os << pad(groups[j].algo + "/" + groups[j].net, 14) << buf << "\n";
      }
    }
  }
  return os.str();
}

int cmd_report(const fs::path& results_dir, std::ostream& out, std::ostream& err) {
  try {
    if (!fs::is_directory(results_dir)) throw UsageError("'" + results_dir.string() + "' is not a directory");
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(results_dir)) {
      const std::string name = entry.path().filename().string();
      if (entry.is_regular_file() && name.starts_with("summary_seed") && name.ends_with(".json")) {
        files.push_back(entry.path());
      }
    }
    if (files.empty()) throw UsageError("no run summaries under '" + results_dir.string() + "'");
    std::sort(files.begin(), files.end());
    std::vector<RunSummary> runs;
    for (const auto& f : files) {
      std::ifstream is(f);
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(is);
      } catch (const nlohmann::json::exception& e) {
        throw IoError("'" + f.string() + "' is not valid JSON: " + e.what());
      }
      runs.push_back(summary_from_json(j));
    }
    const auto groups = group_summaries(std::move(runs));
    const std::string text = render_report(groups);
    out << text;

    std::ostringstream eff, any;
    eff << "env,algo,net,fingerprint,threshold,target_return,median_step,success_rate,runs\n";
    any << "env,algo,net,fingerprint,fraction,mean,std\n";
    for (const auto& g : groups) {
      const std::string key = g.env + "," + g.algo + "," + g.net + "," + g.fingerprint + ",";
      for (double f : kThresholdFractions) {
        const AggregateResult a = aggregate(g.runs, f);
        const auto t = g.runs.front().threshold_returns.find(f);
        eff << key << format_double(f) << ','
            << (t != g.runs.front().threshold_returns.end() ? format_double(t->second) : "") << ','
            << (a.median_step ? format_double(*a.median_step) : "") << ',' << format_double(a.success_rate) << ','
            << a.runs << "\n";
      }
      for (const auto& [f, ms] : anytime_table(g.runs, g.runs.front().total_steps)) {
        any << key << format_double(f) << ',' << format_double(ms.mean) << ',' << format_double(ms.std) << "\n";
      }
    }
    write_text(results_dir / "report.txt", text);
    write_text(results_dir / "efficiency.csv", eff.str());
    write_text(results_dir / "anytime.csv", any.str());
    return kExitOk;
  } catch (...) {
    return report_failure(err, "report");
  }
}

int cmd_dataset(const fs::path& config, const CommandOptions& opts, std::ostream& out, std::ostream& err) {
  try {
    const RunConfig cfg = load_with_overrides(config, opts);
    const DatasetSettings& ds = cfg.dataset;
    if (ds.size == 0) throw UsageError("[dataset] size must be positive");

    std::optional<ActorPolicy> behavior, expert;
    if (ds.tag != "random") {
      if (ds.checkpoint.empty()) throw UsageError("dataset tag '" + ds.tag + "' needs [dataset] checkpoint");
      behavior.emplace(ActorPolicy::load(ds.checkpoint));
    }
    if (!ds.expert_checkpoint.empty()) {
      expert.emplace(ActorPolicy::load(ds.expert_checkpoint));
    } else if (ds.tag == "expert") {
      expert.emplace(ActorPolicy::load(ds.checkpoint));
    }
    for (const auto* p : {behavior ? &*behavior : nullptr, expert ? &*expert : nullptr}) {
      if (p && p->head() != PolicyHead::kSquashedGaussian) {
        throw UsageError("dataset policies must be continuous-action (squashed Gaussian) checkpoints");
      }
    }

    DatasetRequest req;
    req.env = cfg.env;
    req.tag = ds.tag;
    req.size = ds.size;
    req.noise = ds.noise;
    req.seed = ds.seed;
    req.anchor_episodes = ds.anchor_episodes;
    const OfflineDataset data =
        generate_dataset(req, behavior ? &*behavior : nullptr, expert ? &*expert : nullptr);

    fs::path file = ds.file.empty() ? resolve_output_dir(cfg, opts) / ("dataset_" + ds.tag + ".bin") : fs::path(ds.file);
    if (file.has_parent_path()) fs::create_directories(file.parent_path());
    data.save(file);
    nlohmann::json meta = data.header();
    meta["fingerprint"] = config_fingerprint(cfg);
    write_text(fs::path(file.string() + ".json"), meta.dump(2) + "\n");
    if (!opts.quiet) {
      out << "wrote " << data.size() << " transitions to " << file.string() << " (behavior mean return "
          << format_double(data.metadata().behavior_mean_return) << ")\n";
    }
    return kExitOk;
  } catch (...) {
    return report_failure(err, config.string());
  }
}

int cmd_evaluate(const fs::path& checkpoint, const EvaluateOptions& opts, std::ostream& out, std::ostream& err) {
  try {
    if (opts.episodes < 1) throw UsageError("--episodes must be positive");
    nlohmann::json meta;
    ActorPolicy policy = ActorPolicy::load(checkpoint, &meta);
    std::string env_name = opts.env.value_or(meta.value("env", std::string()));
    if (env_name.empty()) throw UsageError("checkpoint does not name its environment; pass --env");
    auto env = make_env(env_name);
    if (policy.network().input_dim() != env->spec().state_dim) {
      throw UsageError("checkpoint input size does not match " + env->spec().name);
    }
    const EvalRecord rec = make_eval_record(0, evaluate_policy(*env, policy.as_policy(), opts.episodes, opts.seed));
    nlohmann::json j = {{"checkpoint", checkpoint.string()},
                        {"env", env->spec().name},
                        {"episodes", opts.episodes},
                        {"seed", opts.seed},
                        {"mean_return", rec.mean},
                        {"std_return", rec.std},
                        {"returns", rec.returns}};
    if (meta.contains("fingerprint")) j["fingerprint"] = meta["fingerprint"];
    out << j.dump(2) << "\n";
    return kExitOk;
  } catch (...) {
    return report_failure(err, checkpoint.string());
  }
}

}  // namespace span_rl
