#include <benchmark/benchmark.h>

#include <vector>

#include "span_rl/bspline.hpp"
#include "span_rl/envs.hpp"
#include "span_rl/mlp_net.hpp"
#include "span_rl/replay.hpp"
#include "span_rl/span_net.hpp"

using namespace span_rl;

static void BM_SplineBasis(benchmark::State& state) {
  SplineBasis basis(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
  std::vector<double> values(basis.nbasis()), derivs(basis.nbasis());
  double x = 0.0;
  for (auto _ : state) {
    x += 0.618033988749895;
    if (x >= 1.0) x -= 1.0;
    benchmark::DoNotOptimize(basis.eval_into(x, values, derivs));
  }
}
BENCHMARK(BM_SplineBasis)->Args({1, 2})->Args({2, 4})->Args({3, 8});

static SpanConfig span_config(std::size_t d, std::size_t m, int n, int k) {
  SpanConfig c;
  c.input_dim = d;
  c.output_dim = 2;
  c.nmodes = m;
  c.nelems = n;
  c.degree = k;
  return c;
}

static void BM_SpanForward(benchmark::State& state) {
  Philox rng(1, 0);
  SpanNet net(span_config(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)), 4, 2),
              rng);
  auto ws = net.make_workspace();
  std::vector<double> s(net.input_dim(), 0.3);
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(s, *ws).data());
}
BENCHMARK(BM_SpanForward)->Args({4, 1})->Args({4, 15})->Args({17, 15});

static void BM_SpanForwardBackward(benchmark::State& state) {
  Philox rng(2, 0);
  SpanNet net(span_config(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)), 4, 2),
              rng);
  auto ws = net.make_workspace();
  std::vector<double> s(net.input_dim(), 0.3), g(net.output_dim(), 1.0);
  for (auto _ : state) {
    net.forward(s, *ws);
    net.backward(*ws, g, {});
  }
}
BENCHMARK(BM_SpanForwardBackward)->Args({4, 1})->Args({4, 15})->Args({17, 15});

static void BM_MlpForwardBackward(benchmark::State& state) {
  Philox rng(3, 0);
  MlpConfig c;
  c.input_dim = 4;
  c.hidden1 = c.hidden2 = static_cast<std::size_t>(state.range(0));
  c.output_dim = 2;
  MlpNet net(c, rng);
  auto ws = net.make_workspace();
  std::vector<double> s(4, 0.3), g(2, 1.0);
  for (auto _ : state) {
    net.forward(s, *ws);
    net.backward(*ws, g, {});
  }
}
BENCHMARK(BM_MlpForwardBackward)->Arg(4)->Arg(64)->Arg(256);

static void BM_EnvStep(benchmark::State& state, const char* name) {
  auto env = make_env(name);
  env->reset(0);
  const bool discrete = env->spec().action.discrete;
  const std::vector<double> torque = {0.5};
  int a = 0;
  for (auto _ : state) {
    if (env->episode_done()) env->reset();
    if (discrete) {
      benchmark::DoNotOptimize(env->step(a));
      a = (a + 1) % 2;
    } else {
      benchmark::DoNotOptimize(env->step(torque));
    }
  }
}
BENCHMARK_CAPTURE(BM_EnvStep, cartpole, "CartPole");
BENCHMARK_CAPTURE(BM_EnvStep, acrobot, "Acrobot");
BENCHMARK_CAPTURE(BM_EnvStep, pendulum, "Pendulum");

static void BM_ReplaySample(benchmark::State& state) {
  TransitionStore store(100000, 3, 1);
  const std::vector<double> s = {0.1, 0.2, 0.3}, a = {0.5};
  for (int i = 0; i < 100000; ++i) store.add(s, a, -1.0, s, false);
  Philox rng(4, 0);
  TransitionBatch batch;
  for (auto _ : state) store.sample(static_cast<std::size_t>(state.range(0)), rng, batch);
}
BENCHMARK(BM_ReplaySample)->Arg(128)->Arg(256);

BENCHMARK_MAIN();
