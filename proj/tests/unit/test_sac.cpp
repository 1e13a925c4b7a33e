#include <doctest.h>

#include <cmath>
#include <numbers>

#include "span_rl/envs.hpp"
#include "span_rl/errors.hpp"
#include "span_rl/optim.hpp"
#include "span_rl/sac.hpp"

using namespace span_rl;

TEST_CASE("soft target") {
  CHECK(sac_target(1.0, 0.99, 0.0, 2.0, 3.0, 0.1) == doctest::Approx(2.881).epsilon(1e-14));
  CHECK(sac_target(1.0, 0.99, 1.0, 2.0, 3.0, 0.1) == 1.0);
  CHECK(sac_target(0.5, 0.9, 0.0, 4.0, 4.0, 0.0) == doctest::Approx(0.5 + 0.9 * 4.0));
  Philox rng(1, 0);
  for (int i = 0; i < 1000; ++i) {
    const double q1 = rng.uniform(-5, 5), q2 = rng.uniform(-5, 5);
    const double y = sac_target(0.0, 0.99, 0.0, q1, q2, 0.0);
    CHECK(y <= 0.99 * q1 + 1e-15);
    CHECK(y <= 0.99 * q2 + 1e-15);
  }
}

TEST_CASE("soft update") {
  ParamStore target, online;
  target.add("w", {3});
  online.add("w", {3});
  for (std::size_t i = 0; i < 3; ++i) online[0].value[i] = 2.0;
  ParamStore t = target;
  soft_update(t, online, 0.0);
  for (double v : t[0].value.data()) CHECK(v == 0.0);
  soft_update(t, online, 0.5);
  for (double v : t[0].value.data()) CHECK(v == 1.0);
  soft_update(t, online, 1.0);
  for (double v : t[0].value.data()) CHECK(v == 2.0);

  ParamStore c = target;
  double prev = 1e300;
  for (int k = 0; k < 50; ++k) {
    soft_update(c, online, 0.005);
    double dist = 0.0;
    for (std::size_t i = 0; i < 3; ++i) dist += std::pow(c[0].value[i] - 2.0, 2);
    CHECK(dist < prev);
    prev = dist;
  }
}

TEST_CASE("replay ring and uniform sampling") {
  TransitionStore store(1000, 1, 1);
  const std::vector<double> a = {0.0};
  for (int i = 0; i < 1200; ++i) {
    const std::vector<double> s = {double(i)};
    store.add(s, a, double(i), s, false);
  }
  CHECK(store.size() == 1000);
  CHECK(store.cursor() == 200);
  CHECK(store.reward(0) == 1000.0);
  CHECK(store.reward(199) == 1199.0);
  CHECK(store.reward(200) == 200.0);

  Philox rng(2, 0);
  std::vector<int> counts(1000, 0);
  TransitionBatch batch;
  for (int i = 0; i < 1000; ++i) {
    store.sample(1000, rng, batch);
    for (std::size_t idx : batch.indices) ++counts[idx];
  }
  const double sigma = std::sqrt(1e6 * 1e-3 * (1 - 1e-3));
  for (int c : counts) CHECK(std::abs(c - 1000.0) < 5 * sigma);

  Philox r1(3, 0), r2(3, 0);
  TransitionBatch b1, b2;
  store.sample(64, r1, b1);
  store.sample(64, r2, b2);
  CHECK(b1.indices == b2.indices);
  CHECK(b1.rewards == b2.rewards);

  TransitionStore empty(10, 1, 1);
  CHECK_THROWS_AS(empty.sample(1, rng, batch), UsageError);
}

TEST_CASE("squashed Gaussian sample") {
  const ActionScaling unit{{1.0}, {0.0}};
  const std::vector<double> out = {0.4, -1.0}, zero = {0.0};
  const auto s = squashed_gaussian(out, zero, unit);
  CHECK(s.action[0] == doctest::Approx(std::tanh(0.4)).epsilon(1e-15));

  const std::vector<double> centered = {0.0, 0.0};
  const auto c = squashed_gaussian(centered, zero, unit);
  const double gauss = -0.5 * std::log(2 * std::numbers::pi);
  CHECK(c.log_prob == doctest::Approx(gauss - std::log(1.0 + 1e-6)).epsilon(1e-14));
  CHECK(gauss - c.log_prob == doctest::Approx(1e-6).epsilon(1e-5));

  const ActionScaling pend = ActionScaling::from_space(Pendulum().spec().action);
  const auto p = squashed_gaussian(out, zero, pend);
  CHECK(p.action[0] == doctest::Approx(2.0 * std::tanh(0.4)));
}

TEST_CASE("log std clamp bounds") {
  const ActionScaling unit{{1.0, 1.0}, {0.0, 0.0}};
  Philox rng(4, 0);
  for (int i = 0; i < 200; ++i) {
    const std::vector<double> out = {rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-20, 20), rng.uniform(-20, 20)};
    const std::vector<double> eps = {rng.normal(), rng.normal()};
    const auto s = squashed_gaussian(out, eps, unit);
    for (std::size_t k = 0; k < 2; ++k) {
      CHECK(s.log_std[k] >= kLogStdMin);
      CHECK(s.log_std[k] <= kLogStdMax);
      CHECK(s.log_std_clamped[k] == (out[2 + k] < kLogStdMin || out[2 + k] > kLogStdMax));
    }
  }
}

TEST_CASE("Monte-Carlo entropy matches the closed form") {
  const ActionScaling unit{{1.0}, {0.0}};
  const double mu = 0.3, log_std = -0.4, sigma = std::exp(log_std);
  // E[log(1 - tanh(u)^2 + 1e-6)] by Simpson quadrature over u ~ N(mu, sigma).
  double correction = 0.0;
  const int n = 20000;
  const double lo = mu - 10 * sigma, h = 20 * sigma / n;
  for (int i = 0; i <= n; ++i) {
    const double u = lo + i * h, w = (i == 0 || i == n) ? 1 : (i % 2 ? 4 : 2);
    const double pdf = std::exp(-0.5 * std::pow((u - mu) / sigma, 2)) / (sigma * std::sqrt(2 * std::numbers::pi));
    correction += w * pdf * std::log(1 - std::pow(std::tanh(u), 2) + 1e-6);
  }
  correction *= h / 3;
  const double closed = 0.5 * std::log(2 * std::numbers::pi * std::numbers::e * sigma * sigma) + correction;

  Philox rng(5, 0);
  const std::vector<double> out = {mu, log_std};
  double mc = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const std::vector<double> eps = {rng.normal()};
    mc -= squashed_gaussian(out, eps, unit).log_prob / 1e5;
  }
  CHECK(std::abs(mc - closed) < 0.01 * std::abs(closed));
}

TEST_CASE("reparameterized log-prob gradient matches finite differences") {
  const ActionScaling scaling{{2.0, 0.5}, {0.0, 0.1}};
  Philox rng(6, 0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> out = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-2, 1), rng.uniform(-2, 1)};
    const std::vector<double> eps = {rng.normal(), rng.normal()};
    std::vector<double> grad(4);
    squashed_log_prob_grad(squashed_gaussian(out, eps, scaling), grad);
    for (std::size_t j = 0; j < 4; ++j) {
      auto hi = out, lo = out;
      hi[j] += 1e-6;
      lo[j] -= 1e-6;
      const double fd =
          (squashed_gaussian(hi, eps, scaling).log_prob - squashed_gaussian(lo, eps, scaling).log_prob) / 2e-6;
      CHECK(grad[j] == doctest::Approx(fd).epsilon(1e-5).scale(1.0));
    }
  }
}

namespace {

struct Setup {
  Philox rng{7, 0};
  NetSpec spec;
  SacConfig cfg;
  std::unique_ptr<SacAgent> agent;
  TransitionBatch batch;

  explicit Setup(NetKind kind, double init_log_alpha = -1.0, double entropy_scale = 1.0) {
    spec.kind = kind;
    spec.nmodes = 3;
    spec.nelems = 3;
    spec.degree = 2;
    spec.hidden1 = spec.hidden2 = 6;
    cfg.init_log_alpha = init_log_alpha;
    cfg.target_entropy_scale = entropy_scale;
    agent = std::make_unique<SacAgent>(spec, spec, 3, ActionScaling::from_space(Pendulum().spec().action), cfg, rng);
    TransitionStore store(64, 3, 1);
    Philox data(8, 0);
    for (int i = 0; i < 32; ++i) {
      const double th = data.uniform(-3, 3), w = data.uniform(-8, 8);
      const std::vector<double> s = {std::cos(th), std::sin(th), w}, a = {data.uniform(-2, 2)};
      store.add(s, a, data.uniform(-16, 0), s, i % 7 == 0);
    }
    store.sample(16, data, batch);
  }
};

}  // namespace

TEST_CASE("actor objective gradient matches finite differences") {
  for (auto kind : {NetKind::kSpan, NetKind::kMlp}) {
    Setup s(kind);
    std::vector<double> eps(16);
    Philox noise(9, 0);
    for (double& e : eps) e = noise.normal();
    auto loss = [&](bool g) { return s.agent->actor_loss(s.batch, eps, g); };
    GradCheckOptions opts;
    opts.probes = 0;
    const auto r = grad_check(loss, s.agent->actor().params(), opts);
    INFO(r.worst_parameter << " " << r.analytic << " " << r.numeric);
    CHECK(r.max_relative_error < 1e-3);
  }
}

TEST_CASE("critic loss gradient matches finite differences") {
  Setup s(NetKind::kSpan);
  Philox noise(10, 0);
  const auto y = s.agent->critic_targets(s.batch, noise);
  for (int i = 0; i < 2; ++i) {
    auto loss = [&](bool g) { return s.agent->critic_loss(i, s.batch, y, g); };
    GradCheckOptions opts;
    opts.probes = 0;
    CHECK(grad_check(loss, s.agent->critic(i).params(), opts).max_relative_error < 1e-4);
  }
}

TEST_CASE("terminal transitions give target r") {
  Setup s(NetKind::kMlp);
  Philox noise(11, 0);
  const auto y = s.agent->critic_targets(s.batch, noise);
  for (std::size_t i = 0; i < s.batch.size; ++i)
    if (s.batch.terminals[i] == 1.0) CHECK(y[i] == s.batch.rewards[i]);
}

TEST_CASE("temperature is stationary when the policy entropy equals the target") {
  Setup probe(NetKind::kSpan);
  Philox r1(12, 0);
  std::vector<double> eps(16);
  for (double& e : eps) e = r1.normal();
  double mean_logp = 0.0;
  probe.agent->actor_loss(probe.batch, eps, false, &mean_logp);

  // target entropy = -scale * A with A = 1.
  Setup s(NetKind::kSpan, -1.0, mean_logp);
  Philox r2(12, 0);
  const double before = s.agent->log_alpha();
  s.agent->actor_and_alpha_update(s.batch, r2);
  CHECK(std::abs(s.agent->log_alpha() - before) < 1e-9);

  // Policy entropy above the target lowers the temperature, below raises it.
  Setup lower(NetKind::kSpan, -1.0, mean_logp + 1.0);
  Philox r3(12, 0);
  lower.agent->actor_and_alpha_update(lower.batch, r3);
  CHECK(lower.agent->log_alpha() < before);
  Setup higher(NetKind::kSpan, -1.0, mean_logp - 1.0);
  Philox r4(12, 0);
  higher.agent->actor_and_alpha_update(higher.batch, r4);
  CHECK(higher.agent->log_alpha() > before);
}

TEST_CASE("a large temperature pushes the policy std up") {
  Setup s(NetKind::kSpan, 8.0);
  std::vector<double> eps(16);
  Philox noise(13, 0);
  for (double& e : eps) e = noise.normal();
  auto& actor = s.agent->actor();
  // Narrow, state-independent std where the tanh correction is negligible.
  auto& w = actor.params().at("head.weight").value;
  for (std::size_t j = 0; j < w.extent(1); ++j) w(1, j) = 0.0;
  actor.params().at("head.bias").value[1] = -2.0;
  actor.params().zero_grad();
  s.agent->actor_loss(s.batch, eps, true);
  // head.bias[1] shifts log std uniformly over all states.
  CHECK(actor.params().at("head.bias").grad[1] < 0.0);
}

TEST_CASE("training: warmup, determinism and zero budget") {
  NetSpec spec;
  spec.nmodes = 2;
  spec.nelems = 2;
  spec.degree = 1;
  SacConfig cfg;
  cfg.warmup_steps = 300;
  cfg.total_steps = 300;
  cfg.batch = 32;
  cfg.eval_interval = 300;
  cfg.eval_episodes = 1;
  const auto w = sac_train("Pendulum", spec, spec, cfg, 0);
  CHECK(w.stored_transitions == 300);
  CHECK(w.gradient_updates == 0);

  cfg.total_steps = 400;
  cfg.eval_interval = 200;
  const auto a = sac_train("Pendulum", spec, spec, cfg, 3);
  const auto b = sac_train("Pendulum", spec, spec, cfg, 3);
  CHECK(a.gradient_updates == 100);
  REQUIRE(a.summary.curve.size() == 2);
  CHECK(a.summary.curve[1].returns == b.summary.curve[1].returns);

  cfg.total_steps = 0;
  CHECK(sac_train("Pendulum", spec, spec, cfg, 0).summary.curve.empty());
  CHECK_THROWS_AS(sac_train("CartPole", spec, spec, cfg, 0), UsageError);
}
