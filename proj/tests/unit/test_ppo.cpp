#include <doctest.h>

#include <cmath>
#include <numeric>

#include "span_rl/envs.hpp"
#include "span_rl/errors.hpp"
#include "span_rl/optim.hpp"
#include "span_rl/ppo.hpp"

using namespace span_rl;

namespace {

struct Gae {
  std::vector<double> adv, ret;
};

Gae gae(const std::vector<double>& r, const std::vector<double>& v, const std::vector<double>& nv,
        const std::vector<std::uint8_t>& term, const std::vector<std::uint8_t>& ended, double gamma, double lambda) {
  Gae out{std::vector<double>(r.size()), std::vector<double>(r.size())};
  compute_gae(r, v, nv, term, ended, gamma, lambda, out.adv, out.ret);
  return out;
}

}  // namespace

TEST_CASE("GAE with lambda 0 is the TD error") {
  const std::vector<double> r = {1.0, -0.5, 2.0, 0.25}, v = {0.3, 0.1, -0.2, 0.7}, nv = {0.1, -0.2, 0.7, 0.4};
  const std::vector<std::uint8_t> term = {0, 0, 1, 0}, ended = {0, 0, 1, 0};
  const auto g = gae(r, v, nv, term, ended, 0.9, 0.0);
  for (std::size_t t = 0; t < r.size(); ++t) {
    const double delta = r[t] + 0.9 * nv[t] * (1 - term[t]) - v[t];
    CHECK(g.adv[t] == doctest::Approx(delta).epsilon(1e-15));
    CHECK(g.ret[t] == doctest::Approx(delta + v[t]).epsilon(1e-15));
  }
}

TEST_CASE("GAE single step") {
  const auto g = gae({1.0}, {0.0}, {0.0}, {0}, {0}, 0.99, 0.95);
  CHECK(g.adv[0] == 1.0);
  CHECK(g.ret[0] == 1.0);
}

TEST_CASE("GAE three-step hand unroll") {
  const double gl = 0.99 * 0.95;
  const std::vector<double> r = {1.0, 2.0, 3.0}, v = {0.5, 0.4, 0.3}, nv = {0.4, 0.3, 0.2};
  const auto g = gae(r, v, nv, {0, 0, 0}, {0, 0, 0}, 0.99, 0.95);
  const double d0 = 1.0 + 0.99 * 0.4 - 0.5;
  const double d1 = 2.0 + 0.99 * 0.3 - 0.4;
  const double d2 = 3.0 + 0.99 * 0.2 - 0.3;
  CHECK(g.adv[2] == doctest::Approx(d2).epsilon(1e-15));
  CHECK(g.adv[1] == doctest::Approx(d1 + gl * d2).epsilon(1e-15));
  CHECK(g.adv[0] == doctest::Approx(d0 + gl * d1 + gl * gl * d2).epsilon(1e-15));
}

TEST_CASE("GAE with lambda 1 equals the Monte-Carlo advantage") {
  Philox rng(1, 0);
  // Two complete episodes of lengths 7 and 5 (the second truncated with a
  // bootstrap value).
  std::vector<double> r(12), v(12), nv(12);
  std::vector<std::uint8_t> term(12, 0), ended(12, 0);
  for (auto& x : r) x = rng.uniform(-1, 1);
  for (auto& x : v) x = rng.uniform(-1, 1);
  for (std::size_t t = 0; t + 1 < 12; ++t) nv[t] = v[t + 1];
  term[6] = ended[6] = 1;
  ended[11] = 1;
  const double bootstrap = 0.37;
  nv[11] = bootstrap;
  const double gamma = 0.97;
  const auto g = gae(r, v, nv, term, ended, gamma, 1.0);
  for (std::size_t t = 0; t < 12; ++t) {
    const std::size_t end = t <= 6 ? 6 : 11;
    double ret = 0.0, disc = 1.0;
    for (std::size_t u = t; u <= end; ++u) {
      ret += disc * r[u];
      disc *= gamma;
    }
    if (end == 11) ret += disc * bootstrap;
    CHECK(std::abs(g.adv[t] - (ret - v[t])) < 1e-10);
  }
}

TEST_CASE("rollout buffer: terminated steps use 0, truncated steps bootstrap from the final value") {
  RolloutBuffer buf(4, 1);
  const std::vector<double> s = {0.0};
  buf.add(s, 0, 0.0, 1.0, 0.5, false, false);
  buf.add(s, 0, 0.0, 1.0, 0.6, true, false);
  buf.add(s, 0, 0.0, 1.0, 0.7, false, true, 2.0);
  buf.add(s, 0, 0.0, 1.0, 0.8, false, false);
  buf.compute_advantages(0.5, 0.0, 3.0);
  CHECK(buf.advantage(0) == doctest::Approx(1.0 + 0.5 * 0.6 - 0.5));
  CHECK(buf.advantage(1) == doctest::Approx(1.0 - 0.6));
  CHECK(buf.advantage(2) == doctest::Approx(1.0 + 0.5 * 2.0 - 0.7));
  CHECK(buf.advantage(3) == doctest::Approx(1.0 + 0.5 * 3.0 - 0.8));
  CHECK(buf.return_to_go(3) == doctest::Approx(buf.advantage(3) + 0.8));
  CHECK(buf.full());
  CHECK_THROWS(buf.add(s, 0, 0.0, 0.0, 0.0, false, false));
}

TEST_CASE("advantage normalization is a positive affine map") {
  Philox rng(2, 0);
  RolloutBuffer buf(64, 2);
  const std::vector<double> s = {0.0, 0.0};
  for (int i = 0; i < 64; ++i) buf.add(s, 0, 0.0, rng.uniform(-3, 5), rng.uniform(-1, 1), i % 9 == 8, false);
  buf.compute_advantages(0.99, 0.95, 0.0);
  const std::vector<double> before(buf.advantages().begin(), buf.advantages().end());
  buf.normalize_advantages();
  const auto after = buf.advantages();
  const double mean = std::accumulate(after.begin(), after.end(), 0.0) / 64.0;
  double var = 0.0;
  for (double a : after) var += (a - mean) * (a - mean) / 64.0;
  CHECK(std::abs(mean) < 1e-12);
  CHECK(var == doctest::Approx(1.0).epsilon(1e-6));
  for (std::size_t i = 0; i < 64; ++i)
    for (std::size_t j = 0; j < 64; ++j)
      if (before[i] < before[j]) CHECK(after[i] < after[j]);
}

TEST_CASE("clipped surrogate") {
  CHECK(clipped_surrogate(1.5, 2.0, 0.2) == doctest::Approx(1.2 * 2.0));
  CHECK(clipped_surrogate(1.1, 2.0, 0.2) == doctest::Approx(1.1 * 2.0));
  CHECK(clipped_surrogate(0.5, -1.0, 0.2) == doctest::Approx(-0.8));
  CHECK(clipped_surrogate(0.5, 1.0, 0.2) == doctest::Approx(0.5));
  Philox rng(3, 0);
  for (int i = 0; i < 1000; ++i) {
    const double ratio = rng.uniform(1.2001, 5.0), adv = rng.uniform(0.0, 10.0);
    CHECK(clipped_surrogate(ratio, adv, 0.2) <= ratio * adv);
  }
}

TEST_CASE("categorical helpers") {
  for (int n : {2, 3, 7}) {
    const std::vector<double> logits(static_cast<std::size_t>(n), 0.3);
    CHECK(categorical_entropy(logits) == doctest::Approx(std::log(n)).epsilon(1e-14));
  }
  const std::vector<double> logits = {1.0, 3.0, 3.0, -2.0};
  CHECK(greedy_action(logits) == 1);
  std::vector<double> lp(4);
  log_softmax(logits, lp);
  double total = 0.0;
  for (double l : lp) total += std::exp(l);
  CHECK(total == doctest::Approx(1.0).epsilon(1e-15));
  Philox rng(4, 0);
  std::vector<int> counts(4, 0);
  for (int i = 0; i < 100000; ++i) ++counts[static_cast<std::size_t>(sample_categorical(logits, rng))];
  for (std::size_t k = 0; k < 4; ++k) CHECK(counts[k] / 1e5 == doctest::Approx(std::exp(lp[k])).epsilon(0.05));
}

namespace {

struct Fixture {
  Philox rng{5, 0};
  NetSpec spec;
  std::unique_ptr<Approximator> actor, critic;
  RolloutBuffer buffer{16, 4};
  std::vector<std::size_t> indices;
  PpoConfig cfg;

  explicit Fixture(NetKind kind, bool perturb_old) {
    spec.kind = kind;
    spec.nmodes = 3;
    spec.nelems = 3;
    spec.degree = 2;
    spec.hidden1 = spec.hidden2 = 5;
    actor = make_network(spec, 4, 3, rng);
    critic = make_network(spec, 4, 1, rng);
    auto ws = actor->make_workspace();
    std::vector<double> lp(3);
    for (int i = 0; i < 16; ++i) {
      std::vector<double> s(4);
      for (double& x : s) x = rng.uniform(-1, 1);
      log_softmax(actor->forward(s, *ws), lp);
      const int a = static_cast<int>(rng.below(3));
      // Old log-probs are moved away from the current ones so that some
      // samples are clipped, without sitting on a clip boundary.
      const double old = perturb_old ? lp[static_cast<std::size_t>(a)] + rng.uniform(-0.6, 0.6) : lp[static_cast<std::size_t>(a)];
      buffer.add(s, a, old, rng.uniform(-1, 1), rng.uniform(-1, 1), i % 5 == 4, false);
    }
    buffer.compute_advantages(0.99, 0.95, 0.1);
    indices.resize(16);
    std::iota(indices.begin(), indices.end(), 0);
  }
};

}  // namespace

TEST_CASE("minibatch loss gradients match finite differences") {
  for (auto kind : {NetKind::kSpan, NetKind::kMlp}) {
    Fixture f(kind, true);
    auto loss = [&](bool g) { return ppo_minibatch_loss(*f.actor, *f.critic, f.buffer, f.indices, f.buffer.advantages(), f.cfg, g); };
    GradCheckOptions opts;
    opts.probes = 0;
    CHECK(grad_check(loss, f.actor->params(), opts).max_relative_error < 1e-4);
    CHECK(grad_check(loss, f.critic->params(), opts).max_relative_error < 1e-4);
  }
}

TEST_CASE("at ratio 1 the policy gradient is the vanilla policy gradient") {
  Fixture f(NetKind::kSpan, false);
  f.cfg.entropy_coef = 0.0;
  f.cfg.value_coef = 0.0;
  const auto adv = f.buffer.advantages();
  ppo_minibatch_loss(*f.actor, *f.critic, f.buffer, f.indices, adv, f.cfg, true);
  std::vector<double> ppo_grad;
  for (const auto& e : f.actor->params().entries())
    for (double g : e.grad.data()) ppo_grad.push_back(g);
  f.actor->params().zero_grad();

  // -mean(A * grad log pi(a|s))
  auto ws = f.actor->make_workspace();
  std::vector<double> lp(3), d(3);
  for (std::size_t i = 0; i < 16; ++i) {
    log_softmax(f.actor->forward(f.buffer.state(i), *ws), lp);
    for (std::size_t k = 0; k < 3; ++k)
      d[k] = -adv[i] / 16.0 * ((static_cast<int>(k) == f.buffer.action(i) ? 1.0 : 0.0) - std::exp(lp[k]));
    f.actor->backward(*ws, d, {});
  }
  std::size_t j = 0;
  for (const auto& e : f.actor->params().entries())
    for (double g : e.grad.data()) CHECK(g == doctest::Approx(ppo_grad[j++]).epsilon(1e-12));
}

TEST_CASE("ppo_update runs the configured number of minibatches") {
  Fixture f(NetKind::kMlp, true);
  f.cfg.minibatch = 4;
  f.cfg.update_epochs = 3;
  Philox shuffle(9, 0);
  const auto stats = ppo_update(*f.actor, *f.critic, f.buffer, f.cfg, shuffle);
  CHECK(stats.minibatches == 12);
  CHECK(f.actor->params().step() == 12);
}

TEST_CASE("config validation") {
  PpoConfig c;
  CHECK_NOTHROW(c.validate());
  c.minibatch = 100;
  CHECK_THROWS(c.validate());
  c = PpoConfig{};
  c.gamma = 1.0;
  CHECK_THROWS(c.validate());
  c = PpoConfig{};
  c.gae_lambda = 1.5;
  CHECK_THROWS(c.validate());
  c = PpoConfig{};
  c.clip = 0.0;
  CHECK_THROWS(c.validate());
}

TEST_CASE("training: zero budget and reproducibility") {
  NetSpec actor, critic;
  actor.kind = critic.kind = NetKind::kSpan;
  actor.nmodes = critic.nmodes = 1;
  PpoConfig cfg;
  cfg.total_steps = 0;
  const auto empty = ppo_train("CartPole", actor, critic, cfg, 0);
  CHECK(empty.summary.curve.empty());
  CHECK(empty.gradient_updates == 0);

  cfg.total_steps = 2048;
  cfg.rollout_batch = 512;
  cfg.eval_interval = 1024;
  cfg.eval_episodes = 3;
  const auto a = ppo_train("CartPole", actor, critic, cfg, 7);
  const auto b = ppo_train("CartPole", actor, critic, cfg, 7);
  REQUIRE(a.summary.curve.size() == 2);
  CHECK(a.summary.curve[0].step == 1024);
  CHECK(a.summary.curve[1].step == 2048);
  for (std::size_t i = 0; i < 2; ++i) CHECK(a.summary.curve[i].returns == b.summary.curve[i].returns);
  CHECK(a.gradient_updates == 4 * 4 * (512 / 64));
  const auto c = ppo_train("CartPole", actor, critic, cfg, 8);
  CHECK(c.summary.seed == 8);
  CHECK_THROWS_AS(ppo_train("Pendulum", actor, critic, cfg, 0), UsageError);
}
