#include "span_rl/optim.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "span_rl/errors.hpp"

namespace span_rl {

void AdamConfig::validate() const {
  if (!(lr > 0.0)) throw UsageError("adam: learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw UsageError("adam: betas must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw UsageError("adam: epsilon must be positive");
  if (max_grad_norm && !(*max_grad_norm > 0.0)) throw UsageError("adam: max grad norm must be positive");
}

void adam_step(ParamStore& store, const AdamConfig& cfg) {
  for (const auto& e : store.entries()) {
    if (!e.grad.all_finite()) throw TrainingFault("non-finite gradient", e.name);
  }
  if (cfg.max_grad_norm) {
    ParamStore* one[] = {&store};
    clip_grad_norm(one, *cfg.max_grad_norm);
  }

  const std::uint64_t t = store.step() + 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (auto& e : store.entries()) {
    double* w = e.value.raw();
    double* g = e.grad.raw();
    double* m = e.m.raw();
    double* v = e.v.raw();
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.epsilon);
      g[i] = 0.0;
    }
  }
  store.set_step(t);
}

double clip_grad_norm(std::span<ParamStore* const> stores, double max_norm) {
  double sq = 0.0;
  for (const auto* s : stores) sq += s->grad_norm_squared();
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double scale = max_norm / (norm + 1e-12);
    for (auto* s : stores) s->scale_grad(scale);
  }
  return norm;
}

void soft_update(ParamStore& target, const ParamStore& online, double tau) {
  if (target.size() != online.size()) throw DimensionError("soft_update: stores differ in entry count");
  for (std::size_t i = 0; i < target.size(); ++i) {
    auto& t = target[i].value;
    const auto& o = online[i].value;
    if (!t.same_shape(o)) throw DimensionError("soft_update: shape mismatch at '" + target[i].name + "'");
    for (std::size_t k = 0; k < t.size(); ++k) t[k] = (1.0 - tau) * t[k] + tau * o[k];
  }
}

GradCheckResult grad_check(const LossFn& loss, ParamStore& store, const GradCheckOptions& opts) {
  store.zero_grad();
  loss(true);
  const std::size_t total = store.parameter_count();
  std::vector<double> analytic(total);
  for (std::size_t i = 0; i < total; ++i) analytic[i] = store.flat_grad(i);
  store.zero_grad();

  std::vector<std::size_t> probes;
  if (opts.probes == 0 || opts.probes >= total) {
    probes.resize(total);
    for (std::size_t i = 0; i < total; ++i) probes[i] = i;
  } else {
    Philox rng(opts.seed, Stream::kProbe);
    for (std::size_t p = 0; p < opts.probes; ++p) probes.push_back(rng.below(total));
  }

  GradCheckResult result;
  for (std::size_t idx : probes) {
    double& theta = store.flat_value(idx);
    const double saved = theta;
    theta = saved + opts.step;
    const double up = loss(false);
    theta = saved - opts.step;
    const double down = loss(false);
    theta = saved;
    const double numeric = (up - down) / (2.0 * opts.step);
    const double a = analytic[idx];
    const double denom = std::max({std::abs(a), std::abs(numeric), opts.floor});
    const double rel = std::abs(a - numeric) / denom;
    if (rel > result.max_relative_error || result.worst_parameter.empty()) {
      result.max_relative_error = std::max(rel, result.max_relative_error);
      result.worst_parameter = store.flat_name(idx);
      result.analytic = a;
      result.numeric = numeric;
    }
  }
  return result;
}

}  // namespace span_rl
