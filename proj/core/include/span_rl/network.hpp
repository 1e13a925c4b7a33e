#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>

#include <nlohmann/json.hpp>

#include "span_rl/param_store.hpp"

namespace span_rl {

// Per-call scratch: forward fills it, backward consumes it. One workspace
// per in-flight sample; reuse across samples is the normal pattern.
class Workspace {
 public:
  virtual ~Workspace() = default;
};

// A differentiable function approximator whose parameters live in a ParamStore.
class Approximator {
 public:
  virtual ~Approximator() = default;

  virtual std::string kind() const = 0;
  virtual std::size_t input_dim() const = 0;
  virtual std::size_t output_dim() const = 0;
  // Architecture description stored in checkpoints.
  virtual nlohmann::json describe() const = 0;

  virtual std::unique_ptr<Workspace> make_workspace() const = 0;
  // Evaluates the network; the returned view points into `ws` and is valid
  // until the next forward on the same workspace.
  virtual std::span<const double> forward(std::span<const double> input, Workspace& ws) const = 0;
  // Back-propagates dLoss/dOutput for the sample cached in `ws`. Parameter
  // gradients are accumulated when `accumulate_params` is set; dLoss/dInput
  // is written to `input_grad` when it is non-empty.
  virtual void backward(const Workspace& ws, std::span<const double> out_grad, std::span<double> input_grad,
                        bool accumulate_params = true) = 0;

  virtual std::unique_ptr<Approximator> clone() const = 0;

  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

 protected:
  ParamStore params_;
};

}  // namespace span_rl
