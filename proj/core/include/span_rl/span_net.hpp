#pragma once

#include <cstddef>
#include <memory>
#include <vector>

#include "span_rl/bspline.hpp"
#include "span_rl/network.hpp"
#include "span_rl/rng.hpp"

namespace span_rl {

struct SpanConfig {
  std::size_t input_dim = 1;
  std::size_t output_dim = 1;
  std::size_t nmodes = 1;
  int nelems = 2;
  int degree = 1;
  // Multiplier on the head's init range; 1 gives uniform(-1/sqrt(M), 1/sqrt(M)).
  double head_init_scale = 1.0;

  void validate() const;
};

// (d^2 + d) + M d (N + k) + (M o + o)
std::size_t span_param_count(const SpanConfig& cfg);

// Sigmoid preprocessing, per-dimension spline expansion, rank-M separable
// modes and a linear head:
//
//   z      = sigmoid(W_pre s + b_pre)
//   S[p,j] = sum_i w[p,j,i] B_i(z_p)
//   mode_j = prod_p S[p,j]
//   out    = W mode + b
//
// Parameters are stored as "pre.weight" (d, d), "pre.bias" (d),
// "spline.weight" (d, M, N + k), "head.weight" (o, M), "head.bias" (o).
class SpanNet final : public Approximator {
 public:
  // Zero-initialized parameters.
  explicit SpanNet(const SpanConfig& cfg);
  // Randomly initialized parameters.
  SpanNet(const SpanConfig& cfg, Philox& init_rng);

  const SpanConfig& config() const { return cfg_; }
  const SplineBasis& basis() const { return basis_; }

  std::string kind() const override { return "span"; }
  std::size_t input_dim() const override { return cfg_.input_dim; }
  std::size_t output_dim() const override { return cfg_.output_dim; }
  nlohmann::json describe() const override;

  std::unique_ptr<Workspace> make_workspace() const override;
  std::span<const double> forward(std::span<const double> input, Workspace& ws) const override;
  void backward(const Workspace& ws, std::span<const double> out_grad, std::span<double> input_grad,
                bool accumulate_params = true) override;
  std::unique_ptr<Approximator> clone() const override;

  void initialize(Philox& rng);

  // Intermediate values of the last forward call, for inspection in tests.
  struct Trace {
    std::vector<double> z;      // d
    std::vector<double> sums;   // d x M
    std::vector<double> modes;  // M
  };
  Trace trace(const Workspace& ws) const;

 private:
  SpanConfig cfg_;
  SplineBasis basis_;
  std::size_t pre_w_, pre_b_, spline_w_, head_w_, head_b_;
};

}  // namespace span_rl
