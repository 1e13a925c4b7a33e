#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "span_rl/networks.hpp"
#include "span_rl/param_store.hpp"
#include "span_rl/policy.hpp"
#include "span_rl/replay.hpp"
#include "span_rl/rng.hpp"
#include "span_rl/training.hpp"

namespace span_rl {

struct SacConfig {
  std::size_t batch = 128;
  std::size_t buffer_capacity = 1'000'000;
  std::uint64_t warmup_steps = 1'000;
  double tau = 0.005;
  double gamma = 0.99;
  double lr = 3e-4;
  double target_entropy_scale = 1.0;
  double max_grad_norm = 10.0;
  double init_log_alpha = 0.0;
  std::uint64_t total_steps = 100'000;
  std::uint64_t eval_interval = 5'000;
  int eval_episodes = 30;

  void validate() const;
  bool operator==(const SacConfig&) const = default;
};

// Twin-critic target y = r + gamma (1 - done) (min(q1, q2) - alpha logp').
double sac_target(double reward, double gamma, double done, double q1_next, double q2_next, double alpha_logp_next);

struct SacLosses {
  double critic1 = 0.0;
  double critic2 = 0.0;
  double actor = 0.0;
  double alpha = 0.0;
  double mean_log_prob = 0.0;
};

// Actor, twin critics, their targets and the learned temperature.
class SacAgent {
 public:
  SacAgent(const NetSpec& actor_spec, const NetSpec& critic_spec, std::size_t state_dim, ActionScaling scaling,
           const SacConfig& cfg, Philox& init_rng);

  Approximator& actor() { return *actor_; }
  Approximator& critic(int i) { return i == 0 ? *q1_ : *q2_; }
  Approximator& target_critic(int i) { return i == 0 ? *q1_target_ : *q2_target_; }
  ParamStore& log_alpha_store() { return log_alpha_; }
  double log_alpha() const { return log_alpha_[0].value[0]; }
  double alpha() const;
  double target_entropy() const;
  const ActionScaling& scaling() const { return scaling_; }
  std::size_t state_dim() const { return state_dim_; }
  std::size_t action_dim() const { return scaling_.dim(); }

  // Reparameterized draw with noise from `rng`.
  SquashedSample sample(std::span<const double> state, Philox& rng);
  std::vector<double> deterministic_action(std::span<const double> state);

  // One Adam step on each critic towards the twin-critic soft target.
  SacLosses critic_update(const TransitionBatch& batch, Philox& rng);
  // One Adam step on the actor, then one on log alpha.
  SacLosses actor_and_alpha_update(const TransitionBatch& batch, Philox& rng);
  void soft_update_targets();

  // Actor objective mean(alpha logpi(a~|s) - min(Q1, Q2)(s, a~)) with fixed
  // noise eps (batch.size x A). With `with_grad`, accumulates actor
  // gradients only. Writes the mean log-probability when asked.
  double actor_loss(const TransitionBatch& batch, std::span<const double> eps, bool with_grad,
                    double* mean_log_prob = nullptr);
  // Critic loss mean((Q_i(s,a) - y)^2) for precomputed targets.
  double critic_loss(int i, const TransitionBatch& batch, std::span<const double> targets, bool with_grad);
  std::vector<double> critic_targets(const TransitionBatch& batch, Philox& rng);

  std::unique_ptr<ActorPolicy> policy() const;
  std::size_t parameter_count() const;

 private:
  std::vector<double> critic_input(std::span<const double> state, std::span<const double> action) const;

  SacConfig cfg_;
  std::size_t state_dim_;
  ActionScaling scaling_;
  std::unique_ptr<Approximator> actor_, q1_, q2_, q1_target_, q2_target_;
  std::unique_ptr<Workspace> actor_ws_, q1_ws_, q2_ws_, q1t_ws_, q2t_ws_;
  ParamStore log_alpha_;
};

TrainResult sac_train(const std::string& env_name, const NetSpec& actor_spec, const NetSpec& critic_spec,
                      const SacConfig& cfg, std::uint64_t seed, const TrainOptions& opts = {});

}  // namespace span_rl
