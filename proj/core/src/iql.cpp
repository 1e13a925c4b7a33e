#include "span_rl/iql.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include "span_rl/binary_io.hpp"
#include "span_rl/envs.hpp"
#include "span_rl/errors.hpp"
#include "span_rl/optim.hpp"

namespace span_rl {
namespace {

constexpr char kMagic[8] = {'S', 'P', 'A', 'N', 'R', 'L', 'D', 'S'};

nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::optional<double> optional_from(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<double>();
}

}  // namespace

void IqlConfig::validate() const {
  if (batch == 0) throw UsageError("iql: batch must be positive");
  if (!(gamma > 0.0 && gamma < 1.0)) throw UsageError("iql: gamma must lie in (0, 1)");
  if (!(expectile > 0.0 && expectile < 1.0)) throw UsageError("iql: expectile must lie in (0, 1)");
  if (!(temperature > 0.0)) throw UsageError("iql: temperature must be positive");
  if (!(tau > 0.0 && tau <= 1.0)) throw UsageError("iql: tau must lie in (0, 1]");
  if (!(weight_clip > 0.0)) throw UsageError("iql: weight clip must be positive");
  if (!(lr > 0.0)) throw UsageError("iql: learning rate must be positive");
  if (eval_episodes < 1) throw UsageError("iql: evaluation episodes must be positive");
  if (likelihood != "gaussian" && likelihood != "squashed") {
    throw UsageError("iql: likelihood must be 'gaussian' or 'squashed'");
  }
}

double expectile_loss(double u, double tau) { return std::abs(tau - (u < 0.0 ? 1.0 : 0.0)) * u * u; }

double expectile_loss_grad(double u, double tau) { return 2.0 * std::abs(tau - (u < 0.0 ? 1.0 : 0.0)) * u; }

double awr_weight(double advantage, double beta, double clip) { return std::min(std::exp(beta * advantage), clip); }

// ---- dataset ----------------------------------------------------------------

OfflineDataset::OfflineDataset(DatasetMetadata meta, std::size_t capacity)
    : meta_(std::move(meta)), data_(capacity, meta_.state_dim, meta_.action_dim) {}

nlohmann::json OfflineDataset::header() const {
  return {{"env", meta_.env},
          {"tag", meta_.tag},
          {"size", data_.size()},
          {"state_dim", meta_.state_dim},
          {"action_dim", meta_.action_dim},
          {"noise", meta_.noise},
          {"seed", meta_.seed},
          {"behavior_mean_return", meta_.behavior_mean_return},
          {"behavior_episodes", meta_.behavior_episodes},
          {"random_return", optional_json(meta_.random_return)},
          {"expert_return", optional_json(meta_.expert_return)},
          {"byte_order", "little"}};
}

void OfflineDataset::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  os.write(kMagic, sizeof kMagic);
  binary::write<std::uint32_t>(os, kVersion);
  binary::write_string(os, header().dump());
  binary::write_doubles(os, data_.states());
  binary::write_doubles(os, data_.actions());
  binary::write_doubles(os, data_.rewards());
  binary::write_doubles(os, data_.next_states());
  binary::write_doubles(os, data_.terminals());
  if (!os) throw IoError("write to '" + path.string() + "' failed");
}

OfflineDataset OfflineDataset::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open dataset '" + path.string() + "'");
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || std::char_traits<char>::compare(magic, kMagic, 8) != 0) {
    throw IoError("'" + path.string() + "' is not a dataset file");
  }
  const auto version = binary::read<std::uint32_t>(is);
  if (version != kVersion) throw IoError("unsupported dataset version " + std::to_string(version));

  DatasetMetadata meta;
  std::size_t n = 0;
  try {
    const auto h = nlohmann::json::parse(binary::read_string(is));
    meta.env = h.at("env").get<std::string>();
    meta.tag = h.at("tag").get<std::string>();
    meta.state_dim = h.at("state_dim").get<std::size_t>();
    meta.action_dim = h.at("action_dim").get<std::size_t>();
    meta.noise = h.at("noise").get<double>();
    meta.seed = h.at("seed").get<std::uint64_t>();
    meta.behavior_mean_return = h.at("behavior_mean_return").get<double>();
    meta.behavior_episodes = h.value("behavior_episodes", std::size_t{0});
    meta.random_return = optional_from(h, "random_return");
    meta.expert_return = optional_from(h, "expert_return");
    n = h.at("size").get<std::size_t>();
    if (h.value("byte_order", std::string("little")) != "little") throw IoError("unsupported dataset byte order");
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed dataset header: ") + e.what());
  }
  if (n == 0) throw IoError("dataset '" + path.string() + "' is empty");
  if (meta.state_dim == 0 || meta.action_dim == 0 || n > (std::size_t{1} << 28)) {
    throw IoError("dataset header has implausible dimensions");
  }

  std::vector<double> s(n * meta.state_dim), a(n * meta.action_dim), r(n), s2(n * meta.state_dim), d(n);
  binary::read_doubles(is, s);
  binary::read_doubles(is, a);
  binary::read_doubles(is, r);
  binary::read_doubles(is, s2);
  binary::read_doubles(is, d);

  OfflineDataset ds(meta, n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(r[i])) throw IoError("dataset contains a non-finite reward");
    ds.data_.add({s.data() + i * meta.state_dim, meta.state_dim}, {a.data() + i * meta.action_dim, meta.action_dim},
                 r[i], {s2.data() + i * meta.state_dim, meta.state_dim}, d[i] != 0.0);
  }
  return ds;
}

OfflineDataset generate_dataset(const DatasetRequest& req, ActorPolicy* behavior, ActorPolicy* expert) {
  if (req.size == 0) throw UsageError("dataset size must be positive");
  if (!(req.noise >= 0.0)) throw UsageError("dataset noise must be non-negative");
  if (req.tag != "expert" && req.tag != "medium" && req.tag != "random") {
    throw UsageError("unknown dataset tag '" + req.tag + "' (expected expert, medium or random)");
  }
  if (req.tag != "random" && !behavior) throw UsageError("dataset tag '" + req.tag + "' needs a policy checkpoint");

  auto env = make_env(req.env);
  const EnvSpec& spec = env->spec();
  if (spec.action.discrete) throw UsageError("offline datasets require a continuous action space");
  const std::size_t adim = spec.action.dim();
  const ActionScaling box = ActionScaling::from_space(spec.action);

  Philox action_rng(req.seed, Stream::kPolicy);
  Philox noise_rng(req.seed, Stream::kNoise);
  auto uniform_action = [&](Philox& rng) {
    std::vector<double> a(adim);
    for (std::size_t k = 0; k < adim; ++k) a[k] = rng.uniform(spec.action.low[k], spec.action.high[k]);
    return a;
  };
  const bool scripted_random = req.tag == "random";

  DatasetMetadata meta;
  meta.env = spec.name;
  meta.tag = req.tag;
  meta.state_dim = spec.state_dim;
  meta.action_dim = adim;
  meta.noise = req.noise;
  meta.seed = req.seed;
  OfflineDataset ds(meta, req.size);

  std::vector<double> state = env->reset(derive_seed(req.seed, static_cast<std::uint64_t>(Stream::kEnvReset)));
  double episode_return = 0.0, completed_sum = 0.0;
  std::size_t completed = 0;
  while (ds.size() < req.size) {
    std::vector<double> action;
    if (scripted_random) {
      action = uniform_action(action_rng);
    } else {
      action = behavior->act(state);
      for (std::size_t k = 0; k < adim; ++k) {
        action[k] = std::clamp(action[k] + req.noise * box.scale[k] * noise_rng.normal(), spec.action.low[k],
                               spec.action.high[k]);
      }
    }
    const Transition tr = env->step(action);
    ds.transitions().add(state, action, tr.reward, tr.next_state, tr.terminated);
    episode_return += tr.reward;
    if (tr.done()) {
      completed_sum += episode_return;
      ++completed;
      episode_return = 0.0;
      state = env->reset();
    } else {
      state = tr.next_state;
    }
  }
  DatasetMetadata& m = ds.metadata();
  m.behavior_episodes = completed;
  m.behavior_mean_return = completed ? completed_sum / static_cast<double>(completed) : episode_return;

  const std::uint64_t anchor_seed = derive_seed(req.seed, static_cast<std::uint64_t>(Stream::kEvalReset));
  auto anchor_env = make_env(req.env);
  Philox probe_rng(req.seed, Stream::kProbe);
  const Policy uniform = [&](std::span<const double>) { return uniform_action(probe_rng); };
  m.random_return = make_eval_record(0, evaluate_policy(*anchor_env, uniform, req.anchor_episodes, anchor_seed)).mean;
  if (expert) {
    m.expert_return =
        make_eval_record(0, evaluate_policy(*anchor_env, expert->as_policy(), req.anchor_episodes, anchor_seed)).mean;
  }
  return ds;
}

// ---- agent ------------------------------------------------------------------

IqlAgent::IqlAgent(const NetSpec& actor_spec, const NetSpec& critic_spec, const NetSpec& value_spec,
                   std::size_t state_dim, ActionScaling scaling, const IqlConfig& cfg, Philox& init_rng)
    : cfg_(cfg), squashed_(cfg.likelihood == "squashed"), state_dim_(state_dim), scaling_(std::move(scaling)) {
  const std::size_t a = scaling_.dim();
  actor_ = make_network(actor_spec, state_dim, a, init_rng);
  log_std_.add("log_std", {a});
  value_ = make_network(value_spec, state_dim, 1, init_rng);
  q1_ = make_network(critic_spec, state_dim + a, 1, init_rng);
  q2_ = make_network(critic_spec, state_dim + a, 1, init_rng);
  q1_target_ = q1_->clone();
  q2_target_ = q2_->clone();
  actor_ws_ = actor_->make_workspace();
  value_ws_ = value_->make_workspace();
  q1_ws_ = q1_->make_workspace();
  q2_ws_ = q2_->make_workspace();
  q1t_ws_ = q1_target_->make_workspace();
  q2t_ws_ = q2_target_->make_workspace();
}

std::vector<double> IqlAgent::critic_input(std::span<const double> state, std::span<const double> action) const {
  std::vector<double> in(state.begin(), state.end());
  in.insert(in.end(), action.begin(), action.end());
  return in;
}

double IqlAgent::target_min_q(std::span<const double> state, std::span<const double> action) {
  const auto in = critic_input(state, action);
  return std::min(q1_target_->forward(in, *q1t_ws_)[0], q2_target_->forward(in, *q2t_ws_)[0]);
}

double IqlAgent::value_loss(const TransitionBatch& batch, bool with_grad) {
  const double inv_b = 1.0 / static_cast<double>(batch.size);
  double loss = 0.0;
  for (std::size_t i = 0; i < batch.size; ++i) {
    const double q = target_min_q(batch.state(i), batch.action(i));
    const double u = q - value_->forward(batch.state(i), *value_ws_)[0];
    loss += expectile_loss(u, cfg_.expectile) * inv_b;
    if (with_grad) {
      const double g = -expectile_loss_grad(u, cfg_.expectile) * inv_b;
      value_->backward(*value_ws_, std::span<const double>(&g, 1), {});
    }
  }
  return loss;
}

double IqlAgent::actor_loss(const TransitionBatch& batch, bool with_grad, double* mean_weight) {
  const double inv_b = 1.0 / static_cast<double>(batch.size);
  const std::size_t a = scaling_.dim();
  std::vector<double> d_out(2 * a), params(2 * a);
  std::copy(log_std_[0].value.data().begin(), log_std_[0].value.data().end(), params.begin() + a);
  double loss = 0.0, weight_sum = 0.0;
  for (std::size_t i = 0; i < batch.size; ++i) {
    const double adv = target_min_q(batch.state(i), batch.action(i)) - value_->forward(batch.state(i), *value_ws_)[0];
    const double w = awr_weight(adv, cfg_.temperature, cfg_.weight_clip);
    weight_sum += w;
    const auto mean = actor_->forward(batch.state(i), *actor_ws_);
    std::copy(mean.begin(), mean.end(), params.begin());
    const std::span<double> grad = with_grad ? std::span<double>(d_out) : std::span<double>();
    const double lp = squashed_
        ? squashed_log_prob_of_action(params, batch.action(i), scaling_, grad)
        : tanh_mean_log_prob_of_action(mean, log_std_[0].value.data(), batch.action(i), scaling_,
                                       with_grad ? grad.first(a) : grad, with_grad ? grad.last(a) : grad);
    loss -= w * lp * inv_b;
    if (with_grad) {
      for (double& g : d_out) g *= -w * inv_b;
      actor_->backward(*actor_ws_, std::span<const double>(d_out).first(a), {});
      for (std::size_t k = 0; k < a; ++k) log_std_[0].grad[k] += d_out[a + k];
    }
  }
  if (mean_weight) *mean_weight = weight_sum * inv_b;
  return loss;
}

double IqlAgent::critic_loss(int i, const TransitionBatch& batch, bool with_grad) {
  Approximator& q = critic(i);
  Workspace& ws = i == 0 ? *q1_ws_ : *q2_ws_;
  const double inv_b = 1.0 / static_cast<double>(batch.size);
  double loss = 0.0;
  for (std::size_t k = 0; k < batch.size; ++k) {
    const double v_next = value_->forward(batch.next_state(k), *value_ws_)[0];
    const double y = batch.rewards[k] + cfg_.gamma * (1.0 - batch.terminals[k]) * v_next;
    const double err = q.forward(critic_input(batch.state(k), batch.action(k)), ws)[0] - y;
    loss += err * err * inv_b;
    if (with_grad) {
      const double g = 2.0 * err * inv_b;
      q.backward(ws, std::span<const double>(&g, 1), {});
    }
  }
  return loss;
}

IqlLosses IqlAgent::update(const TransitionBatch& batch) {
  AdamConfig adam;
  adam.lr = cfg_.lr;
  IqlLosses out;

  value_->params().zero_grad();
  out.value = value_loss(batch, true);
  adam_step(value_->params(), adam);

  actor_->params().zero_grad();
  log_std_.zero_grad();
  out.actor = actor_loss(batch, true, &out.mean_weight);
  adam_step(actor_->params(), adam);
  adam_step(log_std_, adam);

  q1_->params().zero_grad();
  q2_->params().zero_grad();
  out.critic1 = critic_loss(0, batch, true);
  out.critic2 = critic_loss(1, batch, true);
  adam_step(q1_->params(), adam);
  adam_step(q2_->params(), adam);

  soft_update(q1_target_->params(), q1_->params(), cfg_.tau);
  soft_update(q2_target_->params(), q2_->params(), cfg_.tau);

  if (!std::isfinite(out.value + out.actor + out.critic1 + out.critic2)) {
    throw TrainingFault("non-finite IQL loss (value " + std::to_string(out.value) + ", actor " +
                        std::to_string(out.actor) + ", critics " + std::to_string(out.critic1) + "/" +
                        std::to_string(out.critic2) + ")");
  }
  return out;
}

std::vector<double> IqlAgent::deterministic_action(std::span<const double> state) {
  return squashed_mean_action(actor_->forward(state, *actor_ws_), scaling_);
}

std::unique_ptr<ActorPolicy> IqlAgent::policy() const {
  return std::make_unique<ActorPolicy>(actor_->clone(), PolicyHead::kSquashedGaussian, scaling_);
}

std::size_t IqlAgent::parameter_count() const {
  return actor_->params().parameter_count() + log_std_.parameter_count() + value_->params().parameter_count() +
         q1_->params().parameter_count() + q2_->params().parameter_count();
}

IqlResult iql_train(const OfflineDataset& dataset, const NetSpec& actor_spec, const NetSpec& critic_spec,
                    const NetSpec& value_spec, const IqlConfig& cfg, std::uint64_t seed, const TrainOptions& opts) {
  cfg.validate();
  const auto started = std::chrono::steady_clock::now();
  const DatasetMetadata& meta = dataset.metadata();
  auto eval_env = make_env(meta.env);
  const EnvSpec& spec = eval_env->spec();
  if (spec.state_dim != meta.state_dim || spec.action.dim() != meta.action_dim || spec.action.discrete) {
    throw UsageError("dataset dimensions do not match environment " + spec.name);
  }

  Philox init_rng(seed, Stream::kInit);
  Philox replay_rng(seed, Stream::kReplay);
  IqlAgent agent(actor_spec, critic_spec, value_spec, spec.state_dim, ActionScaling::from_space(spec.action), cfg,
                 init_rng);

  IqlResult out;
  TrainResult& result = out.train;
  RunSummary& summary = result.summary;
  summary.seed = seed;
  summary.env = spec.name;
  summary.algo = "iql";
  summary.net = to_string(actor_spec.kind);
  summary.fingerprint = opts.fingerprint;
  summary.total_steps = cfg.iterations;
  summary.parameter_count = agent.parameter_count();

  TransitionBatch batch;
  const std::uint64_t interactions_before = eval_env->interactions();
  for (std::uint64_t it = 1; it <= cfg.iterations; ++it) {
    dataset.transitions().sample(cfg.batch, replay_rng, batch);
    agent.update(batch);
    ++result.gradient_updates;
    if (it == opts.snapshot_step) result.snapshot = agent.policy();
  }
  out.training_interactions = eval_env->interactions() - interactions_before;

  const Policy greedy = [&agent](std::span<const double> s) { return agent.deterministic_action(s); };
  const std::uint64_t eval_seed = derive_seed(seed, static_cast<std::uint64_t>(Stream::kEvalReset));
  summary.curve.push_back(make_eval_record(cfg.iterations, evaluate_policy(*eval_env, greedy, cfg.eval_episodes, eval_seed)));
  if (opts.on_eval) opts.on_eval(summary.curve.back());
  if (meta.random_return && meta.expert_return && *meta.expert_return != *meta.random_return) {
    summary.normalized_score =
        (summary.curve.back().mean - *meta.random_return) / (*meta.expert_return - *meta.random_return);
  }
  summary.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  finalize_summary(summary, spec.target_return, opts.negative_floor);
  result.stored_transitions = dataset.size();
  result.policy = agent.policy();
  result.critic = agent.critic(0).clone();
  return out;
}

}  // namespace span_rl
