#include <doctest.h>

#include <cmath>
#include <numeric>

#include "span_rl/dense_array.hpp"
#include "span_rl/errors.hpp"
#include "span_rl/optim.hpp"
#include "span_rl/param_store.hpp"
#include "span_rl/rng.hpp"

using namespace span_rl;

TEST_CASE("philox known-answer vectors") {
  using A4 = std::array<std::uint32_t, 4>;
  using A2 = std::array<std::uint32_t, 2>;
  CHECK(Philox::block(A4{0, 0, 0, 0}, A2{0, 0}) == A4{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(Philox::block(A4{0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, A2{0xffffffff, 0xffffffff}) ==
        A4{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(Philox::block(A4{0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, A2{0xa4093822, 0x299f31d0}) ==
        A4{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("philox streams are reproducible and seekable") {
  Philox a(42, Stream::kPolicy), b(42, Stream::kPolicy), c(42, Stream::kInit);
  std::vector<std::uint64_t> xs;
  for (int i = 0; i < 10; ++i) {
    xs.push_back(a());
    CHECK(xs.back() == b());
  }
  CHECK(c() != xs[0]);
  Philox d(42, Stream::kPolicy);
  d.seek(2);
  Philox e(42, Stream::kPolicy);
  for (int i = 0; i < 4; ++i) e();
  CHECK(d() == e());
  for (int i = 0; i < 1000; ++i) {
    const double u = a.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(a.below(7) < 7);
  }
}

TEST_CASE("matvec examples") {
  const auto id = DenseArray::matrix({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  const auto y1 = matvec(id, DenseArray::vector({1, 2, 3}));
  CHECK(y1[0] == 1.0);
  CHECK(y1[1] == 2.0);
  CHECK(y1[2] == 3.0);
  const auto y2 = matvec(DenseArray({2, 3}), DenseArray::vector({5, 5, 5}));
  CHECK(y2.size() == 2);
  CHECK(y2[0] == 0.0);
  CHECK(y2[1] == 0.0);
  const auto y3 = matvec(DenseArray::matrix({{1, 2}, {3, 4}}), DenseArray::vector({1, 1}));
  CHECK(y3[0] == 3.0);
  CHECK(y3[1] == 7.0);
  CHECK_THROWS_AS(matvec(DenseArray::matrix({{1, 2}, {3, 4}}), DenseArray::vector({1, 1, 1})), DimensionError);
  CHECK_THROWS_AS(matvec(DenseArray::vector({1, 2}), DenseArray::vector({1, 1})), DimensionError);
}

TEST_CASE("dense array shape invariants") {
  CHECK_THROWS(DenseArray({2, 2}, std::vector<double>{1, 2, 3}));
  DenseArray a({2, 3}, 1.5);
  CHECK(a.size() == 6);
  CHECK(a.all_finite());
  a[4] = NAN;
  CHECK_FALSE(a.all_finite());
}

namespace {

ParamStore two_entry_store() {
  ParamStore s;
  s.add("a", {2});
  s.add("b", {1, 2});
  s[0].value[0] = 1.0;
  s[0].value[1] = -2.0;
  s[1].value[0] = 0.5;
  s[1].value[1] = 3.0;
  return s;
}

}  // namespace

TEST_CASE("adam first step moves by lr against the gradient sign") {
  ParamStore s = two_entry_store();
  const std::vector<double> grads = {0.3, -7.0, 1e-3, -2.0};
  for (std::size_t i = 0; i < 4; ++i) s[i / 2].grad[i % 2] = grads[i];
  ParamStore before = s;
  AdamConfig cfg;
  cfg.lr = 0.01;
  adam_step(s, cfg);
  CHECK(s.step() == 1);
  for (std::size_t i = 0; i < 4; ++i) {
    const double delta = s[i / 2].value[i % 2] - before[i / 2].value[i % 2];
    const double g = grads[i];
    // m_hat = g, v_hat = g^2: delta = -lr g / (|g| + eps).
    CHECK(delta == doctest::Approx(-cfg.lr * g / (std::abs(g) + cfg.epsilon)).epsilon(1e-12));
    CHECK(s[i / 2].grad[i % 2] == 0.0);
  }
}

TEST_CASE("adam with zero gradients leaves parameters unchanged") {
  ParamStore s = two_entry_store();
  ParamStore before = s;
  AdamConfig cfg;
  cfg.max_grad_norm = 0.5;
  for (int k = 0; k < 3; ++k) adam_step(s, cfg);
  for (std::size_t e = 0; e < 2; ++e) {
    for (std::size_t i = 0; i < 2; ++i) CHECK(s[e].value[i] == before[e].value[i]);
  }
}

TEST_CASE("global norm clipping scales the gradient by threshold over norm") {
  ParamStore s = two_entry_store();
  // Norm sqrt(36 + 64) = 10.
  s[0].grad[0] = 6.0;
  s[1].grad[1] = -8.0;
  ParamStore* stores[] = {&s};
  const double norm = clip_grad_norm(stores, 0.5);
  CHECK(norm == doctest::Approx(10.0));
  CHECK(s[0].grad[0] == doctest::Approx(6.0 * 0.05));
  CHECK(s[1].grad[1] == doctest::Approx(-8.0 * 0.05));
  CHECK(s[0].grad[1] == 0.0);
  CHECK(std::sqrt(s.grad_norm_squared()) == doctest::Approx(0.5));
}

TEST_CASE("clipped adam step equals unclipped step on the rescaled gradient") {
  ParamStore a = two_entry_store(), b = two_entry_store();
  const std::vector<double> g = {6.0, 0.0, 0.0, -8.0};
  for (std::size_t i = 0; i < 4; ++i) {
    a[i / 2].grad[i % 2] = g[i];
    b[i / 2].grad[i % 2] = g[i] * 0.05;
  }
  AdamConfig clipped;
  clipped.max_grad_norm = 0.5;
  adam_step(a, clipped);
  adam_step(b, AdamConfig{});
  for (std::size_t i = 0; i < 4; ++i) CHECK(a[i / 2].value[i % 2] == doctest::Approx(b[i / 2].value[i % 2]).epsilon(1e-14));
}

TEST_CASE("non-finite gradient is a training fault naming the entry") {
  ParamStore s = two_entry_store();
  s[1].grad[0] = INFINITY;
  try {
    adam_step(s, AdamConfig{});
    FAIL("expected TrainingFault");
  } catch (const TrainingFault& e) {
    CHECK(e.where() == "b");
  }
}

TEST_CASE("adam config validation") {
  AdamConfig c;
  c.lr = 0.0;
  CHECK_THROWS(c.validate());
  c = {};
  c.beta1 = 1.0;
  CHECK_THROWS(c.validate());
  c = {};
  c.epsilon = 0.0;
  CHECK_THROWS(c.validate());
}

TEST_CASE("soft update") {
  ParamStore target, online;
  target.add("w", {3});
  online.add("w", {3});
  online[0].value.fill(2.0);
  ParamStore t = target;
  soft_update(t, online, 0.5);
  CHECK(t[0].value[1] == 1.0);
  t = target;
  soft_update(t, online, 1.0);
  CHECK(t[0].value[2] == 2.0);
  t = target;
  soft_update(t, online, 0.0);
  CHECK(t[0].value[0] == 0.0);
}

TEST_CASE("grad check on a sum of squares") {
  ParamStore s = two_entry_store();
  LossFn loss = [&](bool with_grad) {
    double l = 0.0;
    for (auto& e : s.entries()) {
      for (std::size_t i = 0; i < e.value.size(); ++i) {
        l += e.value[i] * e.value[i];
        if (with_grad) e.grad[i] += 2.0 * e.value[i];
      }
    }
    return l;
  };
  GradCheckOptions o;
  o.probes = 0;
  const auto r = grad_check(loss, s, o);
  CHECK(r.max_relative_error < 1e-8);
  CHECK(s.grad_norm_squared() == 0.0);
}

TEST_CASE("grad check detects a wrong gradient") {
  ParamStore s = two_entry_store();
  LossFn loss = [&](bool with_grad) {
    const double x = s[0].value[0];
    if (with_grad) s[0].grad[0] += 3.0 * x;  // true derivative is 2x
    return x * x;
  };
  GradCheckOptions o;
  o.probes = 0;
  CHECK(grad_check(loss, s, o).max_relative_error > 0.1);
}
