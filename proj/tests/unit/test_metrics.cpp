#include <doctest.h>

#include <cmath>

#include "span_rl/errors.hpp"
#include "span_rl/metrics.hpp"
#include "span_rl/rng.hpp"

using namespace span_rl;

namespace {

std::vector<EvalRecord> curve_from(const std::vector<double>& means, std::uint64_t interval = 5000) {
  std::vector<EvalRecord> c;
  for (std::size_t i = 0; i < means.size(); ++i) c.push_back(make_eval_record((i + 1) * interval, {means[i]}));
  return c;
}

RunSummary run(const std::vector<double>& means, double target = 500.0) {
  RunSummary s;
  s.env = "CartPole";
  s.algo = "ppo";
  s.net = "span";
  s.curve = curve_from(means);
  s.total_steps = means.size() * 5000;
  finalize_summary(s, target);
  return s;
}

}  // namespace

TEST_CASE("eval record statistics") {
  const auto r = make_eval_record(10, {1.0, 2.0, 3.0, 6.0});
  CHECK(r.mean == 3.0);
  CHECK(r.std == doctest::Approx(std::sqrt(3.5)).epsilon(1e-15));
  CHECK(r.step == 10);
}

TEST_CASE("sustained solve step") {
  const auto c = curve_from({400, 500, 500, 500, 500, 500});
  CHECK(sustained_solve_step(c, 500) == std::optional<std::uint64_t>(10000));
  CHECK_FALSE(sustained_solve_step(curve_from({100, 200, 499.9, 300, 0}), 500).has_value());
  const auto broken = curve_from({500, 500, 500, 500, 400, 500, 500, 500, 500, 500});
  CHECK(sustained_solve_step(broken, 500) == std::optional<std::uint64_t>(30000));
  CHECK_FALSE(sustained_solve_step(curve_from({500, 500, 500, 500}), 500).has_value());
  CHECK_FALSE(sustained_solve_step(std::vector<EvalRecord>{}, 500).has_value());

  Philox rng(1, 0);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> means(40);
    for (double& m : means) m = rng.uniform(0, 500);
    const auto cv = curve_from(means);
    const double lo = rng.uniform(0, 250), hi = lo + rng.uniform(0, 250);
    const auto a = sustained_solve_step(cv, lo), b = sustained_solve_step(cv, hi);
    if (b) {
      REQUIRE(a.has_value());
      CHECK(*a <= *b);
    }
  }
}

TEST_CASE("threshold targets") {
  const auto cart = threshold_targets(500.0);
  CHECK(cart.at(0.25) == 125.0);
  CHECK(cart.at(0.50) == 250.0);
  CHECK(cart.at(0.95) == 475.0);
  CHECK(cart.at(1.00) == 500.0);
  const auto acro = threshold_targets(-100.0);
  CHECK(acro.at(0.50) == -200.0);
  CHECK(acro.at(1.00) == -100.0);
  CHECK(acro.at(0.25) == -400.0);
  CHECK(acro.at(0.75) == doctest::Approx(-133.333333333333));
  CHECK(threshold_targets(-100.0, -300.0).at(0.25) == -300.0);
  CHECK(cart.size() == 5);
}

TEST_CASE("aggregate") {
  std::vector<RunSummary> same;
  for (int i = 0; i < 20; ++i) same.push_back(run({500, 500, 500, 500, 500, 500}));
  const auto all = aggregate(same, 1.0);
  CHECK(all.median_step == std::optional<double>(5000));
  CHECK(all.success_rate == 1.0);
  CHECK(all.runs == 20);

  std::vector<RunSummary> none = {run({0, 0, 0, 0, 0}), run({10, 10, 10, 10, 10})};
  const auto zero = aggregate(none, 0.25);
  CHECK_FALSE(zero.median_step.has_value());
  CHECK(zero.success_rate == 0.0);

  std::vector<RunSummary> mixed(4);
  mixed[0].solve_steps[0.5] = 10;
  mixed[1].solve_steps[0.5] = 20;
  mixed[2].solve_steps[0.5] = 30;
  mixed[3].solve_steps[0.5] = std::nullopt;
  const auto m = aggregate(mixed, 0.5);
  CHECK(m.median_step == std::optional<double>(20));
  CHECK(m.success_rate == 0.75);

  mixed.pop_back();
  mixed[2].solve_steps[0.5] = 40;
  mixed.push_back(mixed[0]);
  CHECK(aggregate(mixed, 0.5).median_step == std::optional<double>(15));

  CHECK_THROWS_AS(aggregate(std::vector<RunSummary>{}, 0.5), UsageError);

  Philox rng(2, 0);
  std::vector<RunSummary> random_runs;
  for (int i = 0; i < 10; ++i) {
    std::vector<double> means(30);
    double level = 0;
    for (double& v : means) v = level = std::min(500.0, level + rng.uniform(-20, 60));
    random_runs.push_back(run(means));
  }
  double prev = 1.0;
  for (double f : kThresholdFractions) {
    const double rate = aggregate(random_runs, f).success_rate;
    CHECK(rate <= prev);
    prev = rate;
  }
}

TEST_CASE("anytime table") {
  std::vector<double> flat(100, 100.0);
  const auto single = anytime_table(std::vector<RunSummary>{run(flat)}, 500000);
  for (double f : kCheckpointFractions) {
    CHECK(single.at(f).mean == 100.0);
    CHECK(single.at(f).std == 0.0);
  }

  const auto two = anytime_table(std::vector<RunSummary>{run({0, 0}), run({200, 200})}, 10000);
  CHECK(two.at(1.0).mean == 100.0);
  CHECK(two.at(1.0).std == 100.0);

  std::vector<double> ramp(100);
  for (std::size_t i = 0; i < 100; ++i) ramp[i] = static_cast<double>(i);
  const auto r = anytime_table(std::vector<RunSummary>{run(ramp)}, 500000);
  CHECK(r.at(0.10).mean == 9.0);  // step 50,000 is the 10th record
  CHECK(r.at(0.25).mean == 24.0);
  CHECK(r.at(0.95).mean == 94.0);
  CHECK(r.at(1.00).mean == 99.0);

  // At 100% the table equals the final curve statistics.
  std::vector<RunSummary> runs = {run(ramp), run(flat)};
  const auto t = anytime_table(runs, 500000);
  const double m = (99.0 + 100.0) / 2;
  CHECK(t.at(1.0).mean == m);
  CHECK(t.at(1.0).std == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("finalize summary fills the maps") {
  const auto s = run({400, 500, 500, 500, 500, 500});
  CHECK(s.solve_steps.size() == 5);
  CHECK(s.solve_steps.at(1.0) == std::optional<std::uint64_t>(10000));
  CHECK(s.solve_steps.at(0.25) == std::optional<std::uint64_t>(5000));
  CHECK(s.threshold_returns.at(0.5) == 250.0);
  // 10% of 35,000 is step 3,500, before the first record.
  CHECK(s.checkpoints.size() == 5);
  CHECK_FALSE(s.checkpoints.count(0.10));
  CHECK(s.checkpoints.at(0.25).mean == 400.0);
  CHECK(s.checkpoints.at(1.0).mean == 500.0);
}

TEST_CASE("summary JSON round trip and CSV schema") {
  auto s = run({1.5, 2.25, 500, 500, 500, 500, 500});
  s.seed = 4;
  s.fingerprint = "abc123";
  s.parameter_count = 86;
  s.wall_clock_seconds = 1.25;
  s.normalized_score = 0.9;
  s.curve[0].returns = {1.0, 2.0};
  s.curve[0] = make_eval_record(5000, {1.0, 2.0});
  const auto j = to_json(s);
  const auto back = summary_from_json(j);
  CHECK(to_json(back) == j);
  CHECK(back.solve_steps == s.solve_steps);
  CHECK(back.normalized_score == s.normalized_score);
  CHECK(back.curve[0].returns == s.curve[0].returns);
  CHECK(j["schema_version"] == RunSummary::kSchemaVersion);

  const auto csv = curve_csv(s.curve, "abc123");
  CHECK(csv.rfind("# span_rl.curve v1 fingerprint=abc123\nstep,mean_return,std_return,ep_returns_json\n5000,1.5,0.5,\"[1,2]\"", 0) == 0);
  CHECK(std::stod(format_double(0.1)) == 0.1);
  CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
}
