#include "span_rl/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "span_rl/errors.hpp"

namespace span_rl {

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw InternalError("format_double failed");
  return std::string(buf, ptr);
}

EvalRecord make_eval_record(std::uint64_t step, std::vector<double> returns) {
  EvalRecord r;
  r.step = step;
  r.returns = std::move(returns);
  if (!r.returns.empty()) {
    double sum = 0.0;
    for (double x : r.returns) sum += x;
    r.mean = sum / static_cast<double>(r.returns.size());
    double sq = 0.0;
    for (double x : r.returns) sq += (x - r.mean) * (x - r.mean);
    r.std = std::sqrt(sq / static_cast<double>(r.returns.size()));
  }
  return r;
}

std::optional<std::uint64_t> sustained_solve_step(std::span<const EvalRecord> curve, double target, int window) {
  int run = 0;
  for (std::size_t i = 0; i < curve.size(); ++i) {
    run = curve[i].mean >= target ? run + 1 : 0;
    if (run == window) return curve[i + 1 - static_cast<std::size_t>(window)].step;
  }
  return std::nullopt;
}

std::map<double, double> threshold_targets(double expert_target, double floor) {
  std::map<double, double> out;
  for (double f : kThresholdFractions) {
    out[f] = expert_target >= 0.0 ? f * expert_target : std::max(floor, expert_target / f);
  }
  return out;
}

AggregateResult aggregate(std::span<const RunSummary> runs, double threshold_fraction) {
  if (runs.empty()) throw UsageError("aggregate: no runs");
  std::vector<double> steps;
  for (const auto& r : runs) {
    auto it = r.solve_steps.find(threshold_fraction);
    if (it != r.solve_steps.end() && it->second) steps.push_back(static_cast<double>(*it->second));
  }
  AggregateResult res;
  res.runs = runs.size();
  res.success_rate = static_cast<double>(steps.size()) / static_cast<double>(runs.size());
  if (!steps.empty()) {
    std::sort(steps.begin(), steps.end());
    const std::size_t n = steps.size();
    res.median_step = n % 2 ? steps[n / 2] : 0.5 * (steps[n / 2 - 1] + steps[n / 2]);
  }
  return res;
}

namespace {

const EvalRecord* record_at(std::span<const EvalRecord> curve, double step) {
  const EvalRecord* best = nullptr;
  for (const auto& r : curve) {
    if (static_cast<double>(r.step) <= step + 1e-9) best = &r;
  }
  return best;
}

}  // namespace

std::map<double, MeanStd> anytime_table(std::span<const RunSummary> runs, std::uint64_t budget) {
  std::map<double, MeanStd> out;
  for (double f : kCheckpointFractions) {
    const double at = std::round(f * static_cast<double>(budget));
    std::vector<double> means;
    for (const auto& r : runs) {
      if (const EvalRecord* rec = record_at(r.curve, at)) means.push_back(rec->mean);
    }
    if (means.empty()) continue;
    const EvalRecord agg = make_eval_record(0, means);
    out[f] = {agg.mean, agg.std};
  }
  return out;
}

void finalize_summary(RunSummary& s, double expert_target, double negative_floor) {
  s.threshold_returns = threshold_targets(expert_target, negative_floor);
  s.solve_steps.clear();
  for (const auto& [f, target] : s.threshold_returns) s.solve_steps[f] = sustained_solve_step(s.curve, target);
  s.checkpoints.clear();
  for (double f : kCheckpointFractions) {
    const double at = std::round(f * static_cast<double>(s.total_steps));
    if (const EvalRecord* rec = record_at(s.curve, at)) s.checkpoints[f] = {rec->mean, rec->std};
  }
}

nlohmann::json to_json(const RunSummary& s) {
  nlohmann::json j;
  j["schema"] = "span_rl.summary";
  j["schema_version"] = RunSummary::kSchemaVersion;
  j["seed"] = s.seed;
  j["env"] = s.env;
  j["algo"] = s.algo;
  j["net"] = s.net;
  j["fingerprint"] = s.fingerprint;
  j["total_steps"] = s.total_steps;
  j["parameter_count"] = s.parameter_count;
  j["wall_clock_seconds"] = s.wall_clock_seconds;
  auto& curve = j["curve"] = nlohmann::json::array();
  for (const auto& r : s.curve) {
    curve.push_back({{"step", r.step}, {"mean", r.mean}, {"std", r.std}, {"returns", r.returns}});
  }
  auto& solve = j["solve_steps"] = nlohmann::json::object();
  for (const auto& [f, step] : s.solve_steps) {
    solve[format_double(f)] = step ? nlohmann::json(*step) : nlohmann::json(nullptr);
  }
  auto& thr = j["threshold_returns"] = nlohmann::json::object();
  for (const auto& [f, v] : s.threshold_returns) thr[format_double(f)] = v;
  auto& ck = j["checkpoints"] = nlohmann::json::object();
  for (const auto& [f, ms] : s.checkpoints) ck[format_double(f)] = {{"mean", ms.mean}, {"std", ms.std}};
  j["normalized_score"] = s.normalized_score ? nlohmann::json(*s.normalized_score) : nlohmann::json(nullptr);
  return j;
}

RunSummary summary_from_json(const nlohmann::json& j) {
  try {
    if (j.value("schema", std::string()) != "span_rl.summary") throw IoError("not a run summary");
    if (j.at("schema_version").get<int>() != RunSummary::kSchemaVersion) {
      throw IoError("unsupported summary schema version");
    }
    RunSummary s;
    s.seed = j.at("seed").get<std::uint64_t>();
    s.env = j.at("env").get<std::string>();
    s.algo = j.at("algo").get<std::string>();
    s.net = j.at("net").get<std::string>();
    s.fingerprint = j.at("fingerprint").get<std::string>();
    s.total_steps = j.at("total_steps").get<std::uint64_t>();
    s.parameter_count = j.value("parameter_count", std::size_t{0});
    s.wall_clock_seconds = j.value("wall_clock_seconds", 0.0);
    for (const auto& r : j.at("curve")) {
      s.curve.push_back(make_eval_record(r.at("step").get<std::uint64_t>(), r.at("returns").get<std::vector<double>>()));
    }
    for (const auto& [k, v] : j.at("solve_steps").items()) {
      s.solve_steps[std::stod(k)] = v.is_null() ? std::nullopt : std::optional<std::uint64_t>(v.get<std::uint64_t>());
    }
    for (const auto& [k, v] : j.at("threshold_returns").items()) s.threshold_returns[std::stod(k)] = v.get<double>();
    for (const auto& [k, v] : j.at("checkpoints").items()) {
      s.checkpoints[std::stod(k)] = {v.at("mean").get<double>(), v.at("std").get<double>()};
    }
    if (j.contains("normalized_score") && !j["normalized_score"].is_null()) {
      s.normalized_score = j["normalized_score"].get<double>();
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed run summary: ") + e.what());
  }
}

std::string curve_csv(std::span<const EvalRecord> curve, const std::string& fingerprint) {
  std::ostringstream os;
  os << "# span_rl.curve v1 fingerprint=" << fingerprint << "\n";
  os << "step,mean_return,std_return,ep_returns_json\n";
  for (const auto& r : curve) {
    os << r.step << ',' << format_double(r.mean) << ',' << format_double(r.std) << ",\"[";
    for (std::size_t i = 0; i < r.returns.size(); ++i) {
      if (i) os << ',';
      os << format_double(r.returns[i]);
    }
    os << "]\"\n";
  }
  return os.str();
}

}  // namespace span_rl
