#include "span_rl/sac.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "span_rl/envs.hpp"
#include "span_rl/errors.hpp"
#include "span_rl/optim.hpp"

namespace span_rl {

void SacConfig::validate() const {
  if (batch == 0) throw UsageError("sac: batch must be positive");
  if (buffer_capacity < batch) throw UsageError("sac: buffer capacity must be at least the batch size");
  if (!(tau > 0.0 && tau <= 1.0)) throw UsageError("sac: tau must lie in (0, 1]");
  if (!(gamma > 0.0 && gamma < 1.0)) throw UsageError("sac: gamma must lie in (0, 1)");
  if (!(lr > 0.0)) throw UsageError("sac: learning rate must be positive");
  if (!(max_grad_norm > 0.0)) throw UsageError("sac: max grad norm must be positive");
  if (eval_interval == 0 || eval_episodes < 1) throw UsageError("sac: evaluation interval and episodes must be positive");
}

double sac_target(double reward, double gamma, double done, double q1_next, double q2_next, double alpha_logp_next) {
  return reward + gamma * (1.0 - done) * (std::min(q1_next, q2_next) - alpha_logp_next);
}

SacAgent::SacAgent(const NetSpec& actor_spec, const NetSpec& critic_spec, std::size_t state_dim,
                   ActionScaling scaling, const SacConfig& cfg, Philox& init_rng)
    : cfg_(cfg), state_dim_(state_dim), scaling_(std::move(scaling)) {
  const std::size_t a = scaling_.dim();
  actor_ = make_network(actor_spec, state_dim, 2 * a, init_rng);
  q1_ = make_network(critic_spec, state_dim + a, 1, init_rng);
  q2_ = make_network(critic_spec, state_dim + a, 1, init_rng);
  q1_target_ = q1_->clone();
  q2_target_ = q2_->clone();
  actor_ws_ = actor_->make_workspace();
  q1_ws_ = q1_->make_workspace();
  q2_ws_ = q2_->make_workspace();
  q1t_ws_ = q1_target_->make_workspace();
  q2t_ws_ = q2_target_->make_workspace();
  log_alpha_.add("log_alpha", {1});
  log_alpha_[0].value[0] = cfg.init_log_alpha;
}

double SacAgent::alpha() const { return std::exp(log_alpha()); }

double SacAgent::target_entropy() const {
  return -cfg_.target_entropy_scale * static_cast<double>(action_dim());
}

std::vector<double> SacAgent::critic_input(std::span<const double> state, std::span<const double> action) const {
  std::vector<double> in(state.begin(), state.end());
  in.insert(in.end(), action.begin(), action.end());
  return in;
}

SquashedSample SacAgent::sample(std::span<const double> state, Philox& rng) {
  std::vector<double> eps(action_dim());
  for (double& e : eps) e = rng.normal();
  return squashed_gaussian(actor_->forward(state, *actor_ws_), eps, scaling_);
}

std::vector<double> SacAgent::deterministic_action(std::span<const double> state) {
  return squashed_mean_action(actor_->forward(state, *actor_ws_), scaling_);
}

std::vector<double> SacAgent::critic_targets(const TransitionBatch& batch, Philox& rng) {
  std::vector<double> y(batch.size);
  const double alpha = this->alpha();
  for (std::size_t i = 0; i < batch.size; ++i) {
    const SquashedSample next = sample(batch.next_state(i), rng);
    const auto in = critic_input(batch.next_state(i), next.action);
    const double q1 = q1_target_->forward(in, *q1t_ws_)[0];
    const double q2 = q2_target_->forward(in, *q2t_ws_)[0];
    y[i] = sac_target(batch.rewards[i], cfg_.gamma, batch.terminals[i], q1, q2, alpha * next.log_prob);
    if (!std::isfinite(y[i])) {
      throw TrainingFault("non-finite SAC critic target (q1 " + std::to_string(q1) + ", q2 " + std::to_string(q2) +
                          ", log_prob " + std::to_string(next.log_prob) + ")");
    }
  }
  return y;
}

double SacAgent::critic_loss(int i, const TransitionBatch& batch, std::span<const double> targets, bool with_grad) {
  Approximator& q = critic(i);
  Workspace& ws = i == 0 ? *q1_ws_ : *q2_ws_;
  const double inv_b = 1.0 / static_cast<double>(batch.size);
  double loss = 0.0;
  for (std::size_t k = 0; k < batch.size; ++k) {
    const double err = q.forward(critic_input(batch.state(k), batch.action(k)), ws)[0] - targets[k];
    loss += err * err * inv_b;
    if (with_grad) {
      const double g = 2.0 * err * inv_b;
      q.backward(ws, std::span<const double>(&g, 1), {});
    }
  }
  return loss;
}

double SacAgent::actor_loss(const TransitionBatch& batch, std::span<const double> eps, bool with_grad,
                            double* mean_log_prob) {
  const std::size_t a = action_dim();
  if (eps.size() != batch.size * a) throw DimensionError("sac actor loss: noise has the wrong length");
  const double alpha = this->alpha();
  const double inv_b = 1.0 / static_cast<double>(batch.size);
  std::vector<double> dlogp(2 * a), d_out(2 * a), in_grad(state_dim_ + a);
  double loss = 0.0, logp_sum = 0.0;
  for (std::size_t i = 0; i < batch.size; ++i) {
    const SquashedSample s = squashed_gaussian(actor_->forward(batch.state(i), *actor_ws_), eps.subspan(i * a, a),
                                               scaling_);
    const auto in = critic_input(batch.state(i), s.action);
    const double q1 = q1_->forward(in, *q1_ws_)[0];
    const double q2 = q2_->forward(in, *q2_ws_)[0];
    const bool first = q1 <= q2;
    loss += (alpha * s.log_prob - std::min(q1, q2)) * inv_b;
    logp_sum += s.log_prob;
    if (!with_grad) continue;

    const double one = 1.0;
    if (first) {
      q1_->backward(*q1_ws_, std::span<const double>(&one, 1), in_grad, false);
    } else {
      q2_->backward(*q2_ws_, std::span<const double>(&one, 1), in_grad, false);
    }
    squashed_log_prob_grad(s, dlogp);
    for (std::size_t k = 0; k < a; ++k) {
      const double dq_du = in_grad[state_dim_ + k] * scaling_.scale[k] * (1.0 - s.squashed[k] * s.squashed[k]);
      const double du_dls = s.log_std_clamped[k] ? 0.0 : std::exp(s.log_std[k]) * s.eps[k];
      d_out[k] = inv_b * (alpha * dlogp[k] - dq_du);
      d_out[a + k] = inv_b * (alpha * dlogp[a + k] - dq_du * du_dls);
    }
    actor_->backward(*actor_ws_, d_out, {});
  }
  if (mean_log_prob) *mean_log_prob = logp_sum * inv_b;
  return loss;
}

SacLosses SacAgent::critic_update(const TransitionBatch& batch, Philox& rng) {
  const std::vector<double> y = critic_targets(batch, rng);
  AdamConfig adam;
  adam.lr = cfg_.lr;
  adam.max_grad_norm = cfg_.max_grad_norm;
  SacLosses out;
  q1_->params().zero_grad();
  q2_->params().zero_grad();
  out.critic1 = critic_loss(0, batch, y, true);
  out.critic2 = critic_loss(1, batch, y, true);
  adam_step(q1_->params(), adam);
  adam_step(q2_->params(), adam);
  return out;
}

SacLosses SacAgent::actor_and_alpha_update(const TransitionBatch& batch, Philox& rng) {
  std::vector<double> eps(batch.size * action_dim());
  for (double& e : eps) e = rng.normal();
  AdamConfig adam;
  adam.lr = cfg_.lr;
  adam.max_grad_norm = cfg_.max_grad_norm;
  SacLosses out;
  actor_->params().zero_grad();
  out.actor = actor_loss(batch, eps, true, &out.mean_log_prob);
  if (!std::isfinite(out.actor)) throw TrainingFault("non-finite SAC actor loss");
  adam_step(actor_->params(), adam);

  // d/dlog_alpha of mean(-log_alpha (logpi + target_entropy)).
  const double drive = out.mean_log_prob + target_entropy();
  out.alpha = -log_alpha() * drive;
  log_alpha_.zero_grad();
  log_alpha_[0].grad[0] = -drive;
  adam_step(log_alpha_, adam);
  return out;
}

void SacAgent::soft_update_targets() {
  soft_update(q1_target_->params(), q1_->params(), cfg_.tau);
  soft_update(q2_target_->params(), q2_->params(), cfg_.tau);
}

std::unique_ptr<ActorPolicy> SacAgent::policy() const {
  return std::make_unique<ActorPolicy>(actor_->clone(), PolicyHead::kSquashedGaussian, scaling_);
}

std::size_t SacAgent::parameter_count() const {
  return actor_->params().parameter_count() + q1_->params().parameter_count() + q2_->params().parameter_count();
}

TrainResult sac_train(const std::string& env_name, const NetSpec& actor_spec, const NetSpec& critic_spec,
                      const SacConfig& cfg, std::uint64_t seed, const TrainOptions& opts) {
  cfg.validate();
  const auto started = std::chrono::steady_clock::now();
  auto env = make_env(env_name);
  auto eval_env = make_env(env_name);
  const EnvSpec& spec = env->spec();
  if (spec.action.discrete) throw UsageError("sac supports continuous action spaces only; " + spec.name + " is discrete");

  Philox init_rng(seed, Stream::kInit);
  Philox policy_rng(seed, Stream::kPolicy);
  Philox replay_rng(seed, Stream::kReplay);
  Philox noise_rng(seed, Stream::kNoise);
  const std::uint64_t train_reset_seed = derive_seed(seed, static_cast<std::uint64_t>(Stream::kEnvReset));
  const std::uint64_t eval_reset_seed = derive_seed(seed, static_cast<std::uint64_t>(Stream::kEvalReset));

  const ActionScaling scaling = ActionScaling::from_space(spec.action);
  SacAgent agent(actor_spec, critic_spec, spec.state_dim, scaling, cfg, init_rng);
  TransitionStore replay(cfg.buffer_capacity, spec.state_dim, scaling.dim());
  TransitionBatch batch;

  TrainResult result;
  RunSummary& summary = result.summary;
  summary.seed = seed;
  summary.env = spec.name;
  summary.algo = "sac";
  summary.net = to_string(actor_spec.kind);
  summary.fingerprint = opts.fingerprint;
  summary.total_steps = cfg.total_steps;
  summary.parameter_count = agent.parameter_count();

  const Policy greedy = [&agent](std::span<const double> s) { return agent.deterministic_action(s); };
  std::vector<double> state = env->reset(train_reset_seed);
  std::vector<double> action(scaling.dim());
  for (std::uint64_t step = 1; step <= cfg.total_steps; ++step) {
    if (step <= cfg.warmup_steps) {
      for (std::size_t k = 0; k < action.size(); ++k) action[k] = policy_rng.uniform(spec.action.low[k], spec.action.high[k]);
    } else {
      action = agent.sample(state, policy_rng).action;
    }
    const Transition tr = env->step(action);
    replay.add(state, action, tr.reward, tr.next_state, tr.terminated);
    state = tr.done() ? env->reset() : tr.next_state;

    if (step > cfg.warmup_steps && replay.size() >= cfg.batch) {
      replay.sample(cfg.batch, replay_rng, batch);
      agent.critic_update(batch, noise_rng);
      agent.actor_and_alpha_update(batch, noise_rng);
      agent.soft_update_targets();
      ++result.gradient_updates;
    }
    if (step == opts.snapshot_step) result.snapshot = agent.policy();
    if (step % cfg.eval_interval == 0) {
      summary.curve.push_back(
          make_eval_record(step, evaluate_policy(*eval_env, greedy, cfg.eval_episodes, eval_reset_seed)));
      if (opts.on_eval) opts.on_eval(summary.curve.back());
    }
  }

  summary.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  finalize_summary(summary, spec.target_return, opts.negative_floor);
  result.stored_transitions = replay.size();
  result.policy = agent.policy();
  result.critic = agent.critic(0).clone();
  return result;
}

}  // namespace span_rl
