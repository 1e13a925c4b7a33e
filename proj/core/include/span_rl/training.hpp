#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>

#include "span_rl/metrics.hpp"
#include "span_rl/network.hpp"
#include "span_rl/policy.hpp"

namespace span_rl {

struct TrainOptions {
  double negative_floor = kDefaultNegativeFloor;
  std::string fingerprint;
  // Invoked after every evaluation.
  std::function<void(const EvalRecord&)> on_eval;
  // When nonzero, a copy of the policy is taken after this many steps
  // (or iterations) and returned as TrainResult::snapshot.
  std::uint64_t snapshot_step = 0;
};

struct TrainResult {
  RunSummary summary;
  std::unique_ptr<ActorPolicy> policy;
  std::unique_ptr<ActorPolicy> snapshot;
  std::unique_ptr<Approximator> critic;
  std::uint64_t gradient_updates = 0;
  std::uint64_t stored_transitions = 0;
};

// Deep copy of a policy (network parameters, head and scaling).
std::unique_ptr<ActorPolicy> copy_policy(const ActorPolicy& policy);

}  // namespace span_rl
