#include "span_rl/ppo.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "span_rl/envs.hpp"
#include "span_rl/errors.hpp"
#include "span_rl/optim.hpp"

namespace span_rl {

void PpoConfig::validate() const {
  if (rollout_batch == 0 || minibatch == 0 || rollout_batch % minibatch != 0) {
    throw UsageError("ppo: rollout batch must be a positive multiple of the minibatch size");
  }
  if (update_epochs < 1) throw UsageError("ppo: update epochs must be >= 1");
  if (!(gamma > 0.0 && gamma < 1.0)) throw UsageError("ppo: gamma must lie in (0, 1)");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) throw UsageError("ppo: lambda must lie in [0, 1]");
  if (!(clip > 0.0)) throw UsageError("ppo: clip coefficient must be positive");
  if (!(lr > 0.0)) throw UsageError("ppo: learning rate must be positive");
  if (!(max_grad_norm > 0.0)) throw UsageError("ppo: max grad norm must be positive");
  if (eval_interval == 0 || eval_episodes < 1) throw UsageError("ppo: evaluation interval and episodes must be positive");
}

void compute_gae(std::span<const double> rewards, std::span<const double> values, std::span<const double> next_values,
                 std::span<const std::uint8_t> terminated, std::span<const std::uint8_t> ended, double gamma,
                 double lambda, std::span<double> advantages, std::span<double> returns) {
  const std::size_t n = rewards.size();
  if (values.size() != n || next_values.size() != n || terminated.size() != n || ended.size() != n ||
      advantages.size() < n || returns.size() < n) {
    throw DimensionError("compute_gae: sequence lengths differ");
  }
  double next_adv = 0.0;
  for (std::size_t t = n; t-- > 0;) {
    const double nonterminal = terminated[t] ? 0.0 : 1.0;
    const double carry = ended[t] ? 0.0 : 1.0;
    const double delta = rewards[t] + gamma * next_values[t] * nonterminal - values[t];
    next_adv = delta + gamma * lambda * carry * next_adv;
    advantages[t] = next_adv;
    returns[t] = next_adv + values[t];
  }
}

RolloutBuffer::RolloutBuffer(std::size_t capacity, std::size_t state_dim)
    : capacity_(capacity),
      state_dim_(state_dim),
      states_(capacity * state_dim),
      actions_(capacity),
      logprobs_(capacity),
      rewards_(capacity),
      values_(capacity),
      final_values_(capacity),
      next_values_(capacity),
      advantages_(capacity),
      returns_(capacity),
      terminated_(capacity),
      ended_(capacity) {}

void RolloutBuffer::add(std::span<const double> state, int action, double logprob, double reward, double value,
                        bool terminated, bool truncated, double final_value) {
  if (full()) throw InternalError("rollout buffer overflow");
  if (state.size() != state_dim_) throw DimensionError("rollout buffer: state length mismatch");
  std::copy(state.begin(), state.end(), states_.begin() + static_cast<std::ptrdiff_t>(size_ * state_dim_));
  actions_[size_] = action;
  logprobs_[size_] = logprob;
  rewards_[size_] = reward;
  values_[size_] = value;
  terminated_[size_] = terminated;
  ended_[size_] = terminated || truncated;
  final_values_[size_] = final_value;
  ++size_;
}

void RolloutBuffer::compute_advantages(double gamma, double lambda, double bootstrap) {
  for (std::size_t t = 0; t < size_; ++t) {
    if (terminated_[t]) {
      next_values_[t] = 0.0;
    } else if (ended_[t]) {
      next_values_[t] = final_values_[t];
    } else {
      next_values_[t] = t + 1 < size_ ? values_[t + 1] : bootstrap;
    }
  }
  compute_gae({rewards_.data(), size_}, {values_.data(), size_}, {next_values_.data(), size_},
              {terminated_.data(), size_}, {ended_.data(), size_}, gamma, lambda, advantages_, returns_);
}

void RolloutBuffer::normalize_advantages() {
  if (size_ == 0) return;
  double mean = 0.0;
  for (std::size_t i = 0; i < size_; ++i) mean += advantages_[i];
  mean /= static_cast<double>(size_);
  double var = 0.0;
  for (std::size_t i = 0; i < size_; ++i) var += (advantages_[i] - mean) * (advantages_[i] - mean);
  const double sd = std::sqrt(var / static_cast<double>(size_));
  for (std::size_t i = 0; i < size_; ++i) advantages_[i] = (advantages_[i] - mean) / (sd + 1e-8);
}

double clipped_surrogate(double ratio, double advantage, double clip) {
  return std::min(ratio * advantage, std::clamp(ratio, 1.0 - clip, 1.0 + clip) * advantage);
}

double ppo_minibatch_loss(Approximator& actor, Approximator& critic, const RolloutBuffer& buffer,
                          std::span<const std::size_t> indices, std::span<const double> advantages,
                          const PpoConfig& cfg, bool with_grad, PpoStats* stats) {
  auto actor_ws = actor.make_workspace();
  auto critic_ws = critic.make_workspace();
  const std::size_t n_actions = actor.output_dim();
  std::vector<double> lp(n_actions), dlogits(n_actions);
  const double inv_b = 1.0 / static_cast<double>(indices.size());
  double policy_loss = 0.0, value_loss = 0.0, entropy = 0.0, kl = 0.0, clipped = 0.0;

  for (std::size_t idx : indices) {
    const auto state = buffer.state(idx);
    const int a = buffer.action(idx);
    const double adv = advantages[idx];

    const auto logits = actor.forward(state, *actor_ws);
    log_softmax(logits, lp);
    double h = 0.0;
    for (double l : lp) h -= std::exp(l) * l;
    const double log_ratio = lp[static_cast<std::size_t>(a)] - buffer.logprob(idx);
    const double ratio = std::exp(log_ratio);
    const double surr1 = ratio * adv;
    const double clamped = std::clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip);
    const double surr2 = clamped * adv;
    const double objective = std::min(surr1, surr2);
    policy_loss -= objective * inv_b;
    entropy += h * inv_b;
    kl += ((ratio - 1.0) - log_ratio) * inv_b;
    if (std::abs(ratio - 1.0) > cfg.clip) clipped += inv_b;

    const auto v_out = critic.forward(state, *critic_ws);
    const double v = v_out[0];
    const double verr = v - buffer.return_to_go(idx);
    value_loss += verr * verr * inv_b;

    if (with_grad) {
      // d(objective)/d(log pi(a)): the clipped branch passes gradient only
      // while the ratio is inside the clip range.
      const bool through_ratio = surr1 <= surr2 || clamped == ratio;
      const double g_logp = through_ratio ? -ratio * adv * inv_b : 0.0;
      for (std::size_t k = 0; k < n_actions; ++k) {
        const double pk = std::exp(lp[k]);
        const double onehot = k == static_cast<std::size_t>(a) ? 1.0 : 0.0;
        dlogits[k] = g_logp * (onehot - pk) + cfg.entropy_coef * inv_b * pk * (lp[k] + h);
      }
      actor.backward(*actor_ws, dlogits, {});
      const double dv = cfg.value_coef * 2.0 * verr * inv_b;
      critic.backward(*critic_ws, std::span<const double>(&dv, 1), {});
    }
  }

  const double total = policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * entropy;
  if (!std::isfinite(total)) {
    throw TrainingFault("non-finite PPO loss (policy " + std::to_string(policy_loss) + ", value " +
                        std::to_string(value_loss) + ", entropy " + std::to_string(entropy) + ")");
  }
  if (stats) {
    stats->policy_loss += policy_loss;
    stats->value_loss += value_loss;
    stats->entropy += entropy;
    stats->approx_kl += kl;
    stats->clip_fraction += clipped;
    stats->minibatches += 1;
  }
  return total;
}

PpoStats ppo_update(Approximator& actor, Approximator& critic, const RolloutBuffer& buffer, const PpoConfig& cfg,
                    Philox& shuffle_rng) {
  PpoStats stats;
  const std::size_t n = buffer.size();
  if (n == 0) return stats;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  AdamConfig adam;
  adam.lr = cfg.lr;
  ParamStore* stores[] = {&actor.params(), &critic.params()};

  for (int epoch = 0; epoch < cfg.update_epochs; ++epoch) {
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);
    for (std::size_t start = 0; start < n; start += cfg.minibatch) {
      const std::size_t len = std::min(cfg.minibatch, n - start);
      actor.params().zero_grad();
      critic.params().zero_grad();
      ppo_minibatch_loss(actor, critic, buffer, std::span(order).subspan(start, len), buffer.advantages(), cfg, true,
                         &stats);
      clip_grad_norm(stores, cfg.max_grad_norm);
      adam_step(actor.params(), adam);
      adam_step(critic.params(), adam);
    }
  }
  if (stats.minibatches) {
    const double k = 1.0 / static_cast<double>(stats.minibatches);
    stats.policy_loss *= k;
    stats.value_loss *= k;
    stats.entropy *= k;
    stats.approx_kl *= k;
    stats.clip_fraction *= k;
  }
  return stats;
}

TrainResult ppo_train(const std::string& env_name, const NetSpec& actor_spec, const NetSpec& critic_spec,
                      const PpoConfig& cfg, std::uint64_t seed, const TrainOptions& opts) {
  cfg.validate();
  const auto started = std::chrono::steady_clock::now();
  auto env = make_env(env_name);
  auto eval_env = make_env(env_name);
  const EnvSpec& spec = env->spec();
  if (!spec.action.discrete) throw UsageError("ppo supports discrete action spaces only; " + spec.name + " is continuous");

  Philox init_rng(seed, Stream::kInit);
  Philox policy_rng(seed, Stream::kPolicy);
  Philox shuffle_rng(seed, Stream::kShuffle);
  const std::uint64_t train_reset_seed = derive_seed(seed, static_cast<std::uint64_t>(Stream::kEnvReset));
  const std::uint64_t eval_reset_seed = derive_seed(seed, static_cast<std::uint64_t>(Stream::kEvalReset));

  auto actor_net = make_network(actor_spec, spec.state_dim, static_cast<std::size_t>(spec.action.n), init_rng);
  auto critic = make_network(critic_spec, spec.state_dim, 1, init_rng);
  auto policy = std::make_unique<ActorPolicy>(std::move(actor_net), PolicyHead::kCategorical);
  Approximator& actor = policy->network();
  auto actor_ws = actor.make_workspace();
  auto critic_ws = critic->make_workspace();

  TrainResult result;
  RunSummary& summary = result.summary;
  summary.seed = seed;
  summary.env = spec.name;
  summary.algo = "ppo";
  summary.net = to_string(actor_spec.kind);
  summary.fingerprint = opts.fingerprint;
  summary.total_steps = cfg.total_steps;
  summary.parameter_count = actor.params().parameter_count() + critic->params().parameter_count();

  RolloutBuffer buffer(cfg.rollout_batch, spec.state_dim);
  std::vector<double> lp(static_cast<std::size_t>(spec.action.n));
  std::vector<double> state = env->reset(train_reset_seed);
  std::uint64_t global_step = 0;
  const Policy greedy = policy->as_policy();

  while (global_step < cfg.total_steps) {
    buffer.clear();
    bool last_ended = false;
    while (!buffer.full() && global_step < cfg.total_steps) {
      const auto logits = actor.forward(state, *actor_ws);
      log_softmax(logits, lp);
      const int a = sample_categorical(logits, policy_rng);
      const double value = critic->forward(state, *critic_ws)[0];
      const Transition tr = env->step(a);
      double final_value = 0.0;
      if (tr.truncated) final_value = critic->forward(tr.next_state, *critic_ws)[0];
      buffer.add(state, a, lp[static_cast<std::size_t>(a)], tr.reward, value, tr.terminated, tr.truncated,
                 final_value);
      last_ended = tr.done();
      state = tr.done() ? env->reset() : tr.next_state;
      ++global_step;
      if (global_step == opts.snapshot_step) result.snapshot = copy_policy(*policy);

      if (global_step % cfg.eval_interval == 0) {
        summary.curve.push_back(
            make_eval_record(global_step, evaluate_policy(*eval_env, greedy, cfg.eval_episodes, eval_reset_seed)));
        if (opts.on_eval) opts.on_eval(summary.curve.back());
      }
    }
    const double bootstrap = last_ended ? 0.0 : critic->forward(state, *critic_ws)[0];
    buffer.compute_advantages(cfg.gamma, cfg.gae_lambda, bootstrap);
    if (cfg.normalize_advantages) buffer.normalize_advantages();
    const PpoStats stats = ppo_update(actor, *critic, buffer, cfg, shuffle_rng);
    result.gradient_updates += stats.minibatches;
  }

  summary.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  finalize_summary(summary, spec.target_return, opts.negative_floor);
  result.policy = std::move(policy);
  result.critic = std::move(critic);
  return result;
}

}  // namespace span_rl
