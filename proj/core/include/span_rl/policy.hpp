#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "span_rl/checkpoint.hpp"
#include "span_rl/envs.hpp"
#include "span_rl/network.hpp"
#include "span_rl/rng.hpp"

namespace span_rl {

// ---- categorical heads (PPO) ----------------------------------------------

void log_softmax(std::span<const double> logits, std::span<double> out);
double categorical_entropy(std::span<const double> logits);
// Lowest index among the maximal logits.
int greedy_action(std::span<const double> logits);
int sample_categorical(std::span<const double> logits, Philox& rng);

// ---- tanh-squashed Gaussian heads (SAC, IQL) -----------------------------

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;
inline constexpr double kSquashEpsilon = 1e-6;
// Actions are clipped to +-(1 - this) before atanh when scoring data.
inline constexpr double kAtanhClip = 1e-6;

// Affine map from (-1, 1) to the environment's action box.
struct ActionScaling {
  std::vector<double> scale;
  std::vector<double> bias;

  static ActionScaling from_space(const ActionSpace& space);
  std::size_t dim() const { return scale.size(); }
};

// One reparameterized draw from the squashed Gaussian given the raw network
// output [mean; log_std] (length 2A) and the noise eps (length A).
struct SquashedSample {
  std::vector<double> mean;
  std::vector<double> log_std;  // after clamping
  std::vector<bool> log_std_clamped;
  std::vector<double> eps;
  std::vector<double> pre_tanh;  // u = mean + exp(log_std) * eps
  std::vector<double> squashed;  // tanh(u)
  std::vector<double> action;    // in environment units
  // log N(u; mean, std) - sum log(1 - tanh(u)^2 + 1e-6)
  double log_prob = 0.0;
};

SquashedSample squashed_gaussian(std::span<const double> net_out, std::span<const double> eps,
                                 const ActionScaling& scaling);

// d(log_prob)/d(net_out) and d(log_prob)/d(pre_tanh) for a reparameterized
// sample: the derivative w.r.t. the network outputs holds eps fixed.
void squashed_log_prob_grad(const SquashedSample& s, std::span<double> d_net_out);

// Log-likelihood of a given environment action (IQL policy extraction). When
// d_net_out is non-empty, writes d(log_prob)/d(net_out).
double squashed_log_prob_of_action(std::span<const double> net_out, std::span<const double> action,
                                   const ActionScaling& scaling, std::span<double> d_net_out = {});

// Gaussian likelihood in the normalized action box with mean tanh(net_mean):
// y = (action - bias) / scale, y ~ N(tanh(m), exp(log_std)^2). log_std is
// clamped to [kLogStdMin, kLogStdMax]. Gradients are written when the
// output spans are non-empty.
double tanh_mean_log_prob_of_action(std::span<const double> net_mean, std::span<const double> log_std,
                                    std::span<const double> action, const ActionScaling& scaling,
                                    std::span<double> d_mean = {}, std::span<double> d_log_std = {});

// Deterministic action: scale * tanh(mean) + bias.
std::vector<double> squashed_mean_action(std::span<const double> net_out, const ActionScaling& scaling);

// ---- policy wrapper -----------------------------------------------------

enum class PolicyHead { kCategorical, kSquashedGaussian };

// A trained actor bundled with its head semantics, evaluable deterministically.
class ActorPolicy {
 public:
  ActorPolicy(std::unique_ptr<Approximator> net, PolicyHead head, ActionScaling scaling = {});

  PolicyHead head() const { return head_; }
  const Approximator& network() const { return *net_; }
  Approximator& network() { return *net_; }
  const ActionScaling& scaling() const { return scaling_; }

  // Greedy argmax (categorical) or tanh(mean) (Gaussian).
  std::vector<double> act(std::span<const double> state);
  Policy as_policy();

  void save(const std::filesystem::path& path, nlohmann::json extra_metadata = nlohmann::json::object()) const;
  static ActorPolicy load(const std::filesystem::path& path, nlohmann::json* metadata_out = nullptr);

 private:
  std::unique_ptr<Approximator> net_;
  std::unique_ptr<Workspace> ws_;
  PolicyHead head_;
  ActionScaling scaling_;
};

// Returns of `episodes` evaluation episodes. The first episode resets with
// `seed`, later ones continue the same reset sequence.
std::vector<double> evaluate_policy(Env& env, const Policy& policy, int episodes, std::uint64_t seed);

}  // namespace span_rl
