#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "span_rl/networks.hpp"
#include "span_rl/policy.hpp"
#include "span_rl/replay.hpp"
#include "span_rl/rng.hpp"
#include "span_rl/training.hpp"

namespace span_rl {

struct IqlConfig {
  std::uint64_t iterations = 20'000;
  std::size_t batch = 256;
  double gamma = 0.99;
  double expectile = 0.7;
  double temperature = 3.0;
  double tau = 0.005;
  double weight_clip = 100.0;
  double lr = 3e-4;
  int eval_episodes = 100;
  // Policy likelihood of dataset actions: "gaussian" scores the normalized
  // action under N(tanh(mean), sigma^2); "squashed" scores atanh of the
  // clipped action under N(mean, sigma^2) with the tanh Jacobian.
  std::string likelihood = "gaussian";

  void validate() const;
  bool operator==(const IqlConfig&) const = default;
};

// |tau - 1(u < 0)| u^2
double expectile_loss(double u, double tau);
// d/du of expectile_loss.
double expectile_loss_grad(double u, double tau);
// min(exp(beta * advantage), clip)
double awr_weight(double advantage, double beta, double clip);

struct DatasetMetadata {
  std::string env;
  std::string tag;  // expert | medium | random
  std::size_t state_dim = 0;
  std::size_t action_dim = 0;
  double noise = 0.0;
  std::uint64_t seed = 0;
  double behavior_mean_return = 0.0;
  std::size_t behavior_episodes = 0;
  // Normalization anchors measured at generation time.
  std::optional<double> random_return;
  std::optional<double> expert_return;
};

// Offline transitions plus the metadata needed to normalize scores.
//
// File layout (little-endian):
//   char[8]  "SPANRLDS"
//   u32      version (1)
//   u32 len, JSON header: metadata fields, "size", "byte_order"
//   f64 states[size * state_dim], actions[size * action_dim],
//       rewards[size], next_states[size * state_dim], terminals[size]
class OfflineDataset {
 public:
  static constexpr std::uint32_t kVersion = 1;

  OfflineDataset(DatasetMetadata meta, std::size_t capacity);

  const DatasetMetadata& metadata() const { return meta_; }
  DatasetMetadata& metadata() { return meta_; }
  const TransitionStore& transitions() const { return data_; }
  TransitionStore& transitions() { return data_; }
  std::size_t size() const { return data_.size(); }

  nlohmann::json header() const;
  void save(const std::filesystem::path& path) const;
  static OfflineDataset load(const std::filesystem::path& path);

 private:
  DatasetMetadata meta_;
  TransitionStore data_;
};

struct DatasetRequest {
  std::string env;
  std::string tag = "expert";
  std::size_t size = 50'000;
  // Standard deviation of Gaussian action noise, as a fraction of the
  // half-width of the action box.
  double noise = 0.0;
  std::uint64_t seed = 0;
  // Episodes used to measure each normalization anchor.
  int anchor_episodes = 100;
};

// Rolls out the behavior policy (the given actor, or uniform random actions
// when `behavior` is null) until `size` transitions are recorded. The expert
// anchor is measured with `expert` (deterministic) when one is given.
OfflineDataset generate_dataset(const DatasetRequest& req, ActorPolicy* behavior, ActorPolicy* expert);

struct IqlLosses {
  double value = 0.0;
  double critic1 = 0.0;
  double critic2 = 0.0;
  double actor = 0.0;
  double mean_weight = 0.0;
};

// Value net, twin critics with targets, and a squashed-Gaussian actor whose
// network outputs the mean; the log standard deviation is a free
// state-independent parameter vector.
class IqlAgent {
 public:
  IqlAgent(const NetSpec& actor_spec, const NetSpec& critic_spec, const NetSpec& value_spec, std::size_t state_dim,
           ActionScaling scaling, const IqlConfig& cfg, Philox& init_rng);

  Approximator& actor() { return *actor_; }
  ParamStore& log_std_store() { return log_std_; }
  Approximator& value() { return *value_; }
  Approximator& critic(int i) { return i == 0 ? *q1_ : *q2_; }
  Approximator& target_critic(int i) { return i == 0 ? *q1_target_ : *q2_target_; }
  const ActionScaling& scaling() const { return scaling_; }

  // V (expectile), actor (AWR), critics, then target soft update.
  IqlLosses update(const TransitionBatch& batch);

  // Individual losses; with `with_grad` they accumulate gradients of the
  // network they train.
  double value_loss(const TransitionBatch& batch, bool with_grad);
  double actor_loss(const TransitionBatch& batch, bool with_grad, double* mean_weight = nullptr);
  double critic_loss(int i, const TransitionBatch& batch, bool with_grad);

  std::vector<double> deterministic_action(std::span<const double> state);
  std::unique_ptr<ActorPolicy> policy() const;
  std::size_t parameter_count() const;

 private:
  double target_min_q(std::span<const double> state, std::span<const double> action);
  std::vector<double> critic_input(std::span<const double> state, std::span<const double> action) const;

  IqlConfig cfg_;
  bool squashed_;
  std::size_t state_dim_;
  ActionScaling scaling_;
  std::unique_ptr<Approximator> actor_, value_, q1_, q2_, q1_target_, q2_target_;
  ParamStore log_std_;
  std::unique_ptr<Workspace> actor_ws_, value_ws_, q1_ws_, q2_ws_, q1t_ws_, q2t_ws_;
};

struct IqlResult {
  TrainResult train;
  // Environment steps taken between dataset load and the final evaluation.
  std::uint64_t training_interactions = 0;
};

IqlResult iql_train(const OfflineDataset& dataset, const NetSpec& actor_spec, const NetSpec& critic_spec,
                    const NetSpec& value_spec, const IqlConfig& cfg, std::uint64_t seed,
                    const TrainOptions& opts = {});

}  // namespace span_rl
