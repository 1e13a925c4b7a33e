#pragma once

#include <cstddef>
#include <memory>
#include <string>

#include "span_rl/network.hpp"
#include "span_rl/rng.hpp"

namespace span_rl {

enum class Activation { kTanh, kRelu };

Activation parse_activation(const std::string& name);
std::string to_string(Activation a);

struct MlpConfig {
  std::size_t input_dim = 1;
  std::size_t hidden1 = 1;
  std::size_t hidden2 = 1;
  std::size_t output_dim = 1;
  Activation activation = Activation::kTanh;
  // Init range multiplier for the output layer (0.01 for PPO policy heads).
  double output_init_scale = 1.0;

  void validate() const;
};

// d*h1 + h1 + h1*h2 + h2 + h2*o + o
std::size_t mlp_param_count(const MlpConfig& cfg);

// Two hidden layers: affine -> act -> affine -> act -> affine.
// Parameters: "l1.weight" (h1, d), "l1.bias", "l2.weight" (h2, h1),
// "l2.bias", "l3.weight" (o, h2), "l3.bias".
class MlpNet final : public Approximator {
 public:
  explicit MlpNet(const MlpConfig& cfg);
  MlpNet(const MlpConfig& cfg, Philox& init_rng);

  const MlpConfig& config() const { return cfg_; }

  std::string kind() const override { return "mlp"; }
  std::size_t input_dim() const override { return cfg_.input_dim; }
  std::size_t output_dim() const override { return cfg_.output_dim; }
  nlohmann::json describe() const override;

  std::unique_ptr<Workspace> make_workspace() const override;
  std::span<const double> forward(std::span<const double> input, Workspace& ws) const override;
  void backward(const Workspace& ws, std::span<const double> out_grad, std::span<double> input_grad,
                bool accumulate_params = true) override;
  std::unique_ptr<Approximator> clone() const override;

  void initialize(Philox& rng);

 private:
  MlpConfig cfg_;
  std::size_t w1_, b1_, w2_, b2_, w3_, b3_;
};

}  // namespace span_rl
