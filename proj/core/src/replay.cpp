#include "span_rl/replay.hpp"

#include <algorithm>

#include "span_rl/errors.hpp"

namespace span_rl {

TransitionStore::TransitionStore(std::size_t capacity, std::size_t state_dim, std::size_t action_dim)
    : capacity_(capacity), state_dim_(state_dim), action_dim_(action_dim) {
  if (capacity == 0) throw UsageError("transition store capacity must be positive");
}

void TransitionStore::add(std::span<const double> state, std::span<const double> action, double reward,
                          std::span<const double> next_state, bool terminal) {
  if (state.size() != state_dim_ || next_state.size() != state_dim_ || action.size() != action_dim_) {
    throw DimensionError("transition store: transition shape mismatch");
  }
  if (size_ < capacity_) {
    // Storage grows lazily so a 1e6-capacity ring costs nothing up front.
    states_.insert(states_.end(), state.begin(), state.end());
    actions_.insert(actions_.end(), action.begin(), action.end());
    rewards_.push_back(reward);
    next_states_.insert(next_states_.end(), next_state.begin(), next_state.end());
    terminals_.push_back(terminal ? 1.0 : 0.0);
    ++size_;
  } else {
    std::copy(state.begin(), state.end(), states_.begin() + static_cast<std::ptrdiff_t>(cursor_ * state_dim_));
    std::copy(action.begin(), action.end(), actions_.begin() + static_cast<std::ptrdiff_t>(cursor_ * action_dim_));
    rewards_[cursor_] = reward;
    std::copy(next_state.begin(), next_state.end(),
              next_states_.begin() + static_cast<std::ptrdiff_t>(cursor_ * state_dim_));
    terminals_[cursor_] = terminal ? 1.0 : 0.0;
  }
  cursor_ = (cursor_ + 1) % capacity_;
}

void TransitionStore::sample(std::size_t n, Philox& rng, TransitionBatch& out) const {
  if (size_ == 0) throw UsageError("cannot sample from an empty transition store");
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = static_cast<std::size_t>(rng.below(size_));
  gather(idx, out);
}

void TransitionStore::gather(std::span<const std::size_t> indices, TransitionBatch& out) const {
  const std::size_t n = indices.size();
  out.size = n;
  out.state_dim = state_dim_;
  out.action_dim = action_dim_;
  out.indices.assign(indices.begin(), indices.end());
  out.states.resize(n * state_dim_);
  out.actions.resize(n * action_dim_);
  out.rewards.resize(n);
  out.next_states.resize(n * state_dim_);
  out.terminals.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = indices[k];
    if (i >= size_) throw DimensionError("transition index out of range");
    std::copy_n(states_.begin() + static_cast<std::ptrdiff_t>(i * state_dim_), state_dim_,
                out.states.begin() + static_cast<std::ptrdiff_t>(k * state_dim_));
    std::copy_n(actions_.begin() + static_cast<std::ptrdiff_t>(i * action_dim_), action_dim_,
                out.actions.begin() + static_cast<std::ptrdiff_t>(k * action_dim_));
    out.rewards[k] = rewards_[i];
    std::copy_n(next_states_.begin() + static_cast<std::ptrdiff_t>(i * state_dim_), state_dim_,
                out.next_states.begin() + static_cast<std::ptrdiff_t>(k * state_dim_));
    out.terminals[k] = terminals_[i];
  }
}

}  // namespace span_rl
