#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>

#include "span_rl/param_store.hpp"
#include "span_rl/rng.hpp"

namespace span_rl {

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::optional<double> max_grad_norm;

  void validate() const;
};

// Bias-corrected Adam update of every entry, then gradients are zeroed.
// With max_grad_norm set, the global gradient norm over the whole store is
// rescaled to at most the threshold first. Throws TrainingFault naming the
// first entry holding a non-finite gradient.
void adam_step(ParamStore& store, const AdamConfig& cfg);

// Rescales gradients of all stores jointly so their combined L2 norm is at
// most max_norm. Returns the norm before clipping.
double clip_grad_norm(std::span<ParamStore* const> stores, double max_norm);

// target <- (1 - tau) target + tau online, entrywise.
void soft_update(ParamStore& target, const ParamStore& online, double tau);

// Scalar loss of the current parameter values. When `with_grad` is true the
// callee must also accumulate dLoss/dParam into the store's gradient slots.
using LossFn = std::function<double(bool with_grad)>;

struct GradCheckOptions {
  std::size_t probes = 32;  // 0 probes every parameter
  double step = 1e-5;
  // Relative error is |a - n| / max(|a|, |n|, floor).
  double floor = 1e-6;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Compares the analytic gradient against central finite differences on
// randomly chosen scalar parameters. The store's gradients are left zeroed.
GradCheckResult grad_check(const LossFn& loss, ParamStore& store, const GradCheckOptions& opts = {});

}  // namespace span_rl
