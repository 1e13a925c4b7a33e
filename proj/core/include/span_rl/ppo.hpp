#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "span_rl/metrics.hpp"
#include "span_rl/network.hpp"
#include "span_rl/networks.hpp"
#include "span_rl/policy.hpp"
#include "span_rl/rng.hpp"
#include "span_rl/training.hpp"

namespace span_rl {

struct PpoConfig {
  std::size_t rollout_batch = 1024;
  std::size_t minibatch = 64;
  int update_epochs = 4;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip = 0.2;
  double value_coef = 0.5;
  double entropy_coef = 0.01;
  double max_grad_norm = 0.5;
  double lr = 3e-4;
  bool normalize_advantages = true;
  std::uint64_t total_steps = 500'000;
  std::uint64_t eval_interval = 5'000;
  int eval_episodes = 30;

  void validate() const;
  bool operator==(const PpoConfig&) const = default;
};

// GAE over a flat step sequence.
//   delta_t = r_t + gamma * next_value_t * (1 - terminated_t) - value_t
//   A_t     = delta_t + gamma * lambda * (1 - ended_t) * A_{t+1}
//   R_t     = A_t + value_t
// next_value_t is V(s_{t+1}) (V of the final observation for truncated
// steps); ended_t marks the last step of an episode (terminated or truncated).
void compute_gae(std::span<const double> rewards, std::span<const double> values,
                 std::span<const double> next_values, std::span<const std::uint8_t> terminated,
                 std::span<const std::uint8_t> ended, double gamma, double lambda, std::span<double> advantages,
                 std::span<double> returns);

class RolloutBuffer {
 public:
  RolloutBuffer(std::size_t capacity, std::size_t state_dim);

  // `final_value` is V(s') of the step's next state; it is only read for
  // truncated steps (terminated steps bootstrap with 0, others use the next
  // stored value).
  void add(std::span<const double> state, int action, double logprob, double reward, double value, bool terminated,
           bool truncated, double final_value = 0.0);
  // Fills advantages and returns. `bootstrap` is V of the state following the
  // last stored step and is ignored when that step ended an episode.
  void compute_advantages(double gamma, double lambda, double bootstrap);
  void normalize_advantages();
  void clear() { size_ = 0; }

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  bool full() const { return size_ == capacity_; }
  std::size_t state_dim() const { return state_dim_; }

  std::span<const double> state(std::size_t i) const { return {states_.data() + i * state_dim_, state_dim_}; }
  int action(std::size_t i) const { return actions_[i]; }
  double logprob(std::size_t i) const { return logprobs_[i]; }
  double reward(std::size_t i) const { return rewards_[i]; }
  double value(std::size_t i) const { return values_[i]; }
  double advantage(std::size_t i) const { return advantages_[i]; }
  double return_to_go(std::size_t i) const { return returns_[i]; }
  std::span<const double> advantages() const { return {advantages_.data(), size_}; }
  std::span<const double> returns() const { return {returns_.data(), size_}; }

 private:
  std::size_t capacity_;
  std::size_t state_dim_;
  std::size_t size_ = 0;
  std::vector<double> states_;
  std::vector<int> actions_;
  std::vector<double> logprobs_, rewards_, values_, final_values_, next_values_, advantages_, returns_;
  std::vector<std::uint8_t> terminated_, ended_;
};

// Per-sample clipped surrogate min(rho A, clip(rho, 1-eps, 1+eps) A).
double clipped_surrogate(double ratio, double advantage, double clip);

struct PpoStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  std::size_t minibatches = 0;
};

// Runs cfg.update_epochs passes of shuffled minibatches; one joint
// (clip + Adam) step on actor and critic per minibatch. Advantages must have
// been computed.
PpoStats ppo_update(Approximator& actor, Approximator& critic, const RolloutBuffer& buffer, const PpoConfig& cfg,
                    Philox& shuffle_rng);

// Loss of one minibatch and, with `with_grad`, its parameter gradients.
// Exposed for gradient checks.
double ppo_minibatch_loss(Approximator& actor, Approximator& critic, const RolloutBuffer& buffer,
                          std::span<const std::size_t> indices, std::span<const double> advantages,
                          const PpoConfig& cfg, bool with_grad, PpoStats* stats = nullptr);

TrainResult ppo_train(const std::string& env_name, const NetSpec& actor_spec, const NetSpec& critic_spec,
                      const PpoConfig& cfg, std::uint64_t seed, const TrainOptions& opts = {});

}  // namespace span_rl
