#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "span_rl/rng.hpp"

namespace span_rl {

// A minibatch of transitions stored row-major.
struct TransitionBatch {
  std::size_t size = 0;
  std::size_t state_dim = 0;
  std::size_t action_dim = 0;
  std::vector<std::size_t> indices;
  std::vector<double> states;
  std::vector<double> actions;
  std::vector<double> rewards;
  std::vector<double> next_states;
  std::vector<double> terminals;

  std::span<const double> state(std::size_t i) const { return {states.data() + i * state_dim, state_dim}; }
  std::span<const double> action(std::size_t i) const { return {actions.data() + i * action_dim, action_dim}; }
  std::span<const double> next_state(std::size_t i) const {
    return {next_states.data() + i * state_dim, state_dim};
  }
};

// Flat transition storage. As a ring (capacity > 0) the oldest item is
// overwritten once full; sampling is uniform over stored items.
class TransitionStore {
 public:
  TransitionStore(std::size_t capacity, std::size_t state_dim, std::size_t action_dim);

  // `terminal` marks true termination (not horizon truncation).
  void add(std::span<const double> state, std::span<const double> action, double reward,
           std::span<const double> next_state, bool terminal);

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  std::size_t state_dim() const { return state_dim_; }
  std::size_t action_dim() const { return action_dim_; }
  // Position the next add() writes to.
  std::size_t cursor() const { return cursor_; }

  std::span<const double> state(std::size_t i) const { return {states_.data() + i * state_dim_, state_dim_}; }
  std::span<const double> action(std::size_t i) const { return {actions_.data() + i * action_dim_, action_dim_}; }
  std::span<const double> next_state(std::size_t i) const {
    return {next_states_.data() + i * state_dim_, state_dim_};
  }
  double reward(std::size_t i) const { return rewards_[i]; }
  double terminal(std::size_t i) const { return terminals_[i]; }

  // Whole arrays in storage order.
  std::span<const double> states() const { return states_; }
  std::span<const double> actions() const { return actions_; }
  std::span<const double> rewards() const { return rewards_; }
  std::span<const double> next_states() const { return next_states_; }
  std::span<const double> terminals() const { return terminals_; }

  // Draws n items uniformly with replacement. Throws UsageError if empty.
  void sample(std::size_t n, Philox& rng, TransitionBatch& out) const;
  void gather(std::span<const std::size_t> indices, TransitionBatch& out) const;

 private:
  std::size_t capacity_;
  std::size_t state_dim_;
  std::size_t action_dim_;
  std::size_t size_ = 0;
  std::size_t cursor_ = 0;
  std::vector<double> states_, actions_, rewards_, next_states_, terminals_;
};

}  // namespace span_rl
