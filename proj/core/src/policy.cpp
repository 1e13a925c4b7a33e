#include "span_rl/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "span_rl/errors.hpp"
#include "span_rl/networks.hpp"
#include "span_rl/training.hpp"

namespace span_rl {
namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

}  // namespace

void log_softmax(std::span<const double> logits, std::span<double> out) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double l : logits) sum += std::exp(l - mx);
  const double lse = mx + std::log(sum);
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
}

double categorical_entropy(std::span<const double> logits) {
  std::vector<double> lp(logits.size());
  log_softmax(logits, lp);
  double h = 0.0;
  for (double l : lp) h -= std::exp(l) * l;
  return h;
}

int greedy_action(std::span<const double> logits) {
  return static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

int sample_categorical(std::span<const double> logits, Philox& rng) {
  std::vector<double> lp(logits.size());
  log_softmax(logits, lp);
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i < lp.size(); ++i) {
    acc += std::exp(lp[i]);
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(lp.size()) - 1;
}

ActionScaling ActionScaling::from_space(const ActionSpace& space) {
  if (space.discrete) throw UsageError("action scaling needs a continuous action space");
  ActionScaling s;
  for (std::size_t i = 0; i < space.low.size(); ++i) {
    s.scale.push_back(0.5 * (space.high[i] - space.low[i]));
    s.bias.push_back(0.5 * (space.high[i] + space.low[i]));
  }
  return s;
}

SquashedSample squashed_gaussian(std::span<const double> net_out, std::span<const double> eps,
                                 const ActionScaling& scaling) {
  const std::size_t a = scaling.dim();
  if (net_out.size() != 2 * a || eps.size() != a) throw DimensionError("squashed gaussian: size mismatch");
  SquashedSample s;
  s.mean.assign(net_out.begin(), net_out.begin() + static_cast<std::ptrdiff_t>(a));
  s.eps.assign(eps.begin(), eps.end());
  s.log_std.resize(a);
  s.log_std_clamped.resize(a);
  s.pre_tanh.resize(a);
  s.squashed.resize(a);
  s.action.resize(a);
  s.log_prob = 0.0;
  for (std::size_t k = 0; k < a; ++k) {
    const double raw = net_out[a + k];
    s.log_std[k] = std::clamp(raw, kLogStdMin, kLogStdMax);
    s.log_std_clamped[k] = raw < kLogStdMin || raw > kLogStdMax;
    const double sd = std::exp(s.log_std[k]);
    s.pre_tanh[k] = s.mean[k] + sd * eps[k];
    s.squashed[k] = std::tanh(s.pre_tanh[k]);
    s.action[k] = scaling.scale[k] * s.squashed[k] + scaling.bias[k];
    s.log_prob += -0.5 * eps[k] * eps[k] - s.log_std[k] - kHalfLog2Pi -
                  std::log(1.0 - s.squashed[k] * s.squashed[k] + kSquashEpsilon);
  }
  return s;
}

void squashed_log_prob_grad(const SquashedSample& s, std::span<double> d_net_out) {
  const std::size_t a = s.mean.size();
  for (std::size_t k = 0; k < a; ++k) {
    const double t = s.squashed[k];
    const double one_m = 1.0 - t * t;
    // d/du of -log(1 - tanh(u)^2 + eps)
    const double dc_du = 2.0 * t * one_m / (one_m + kSquashEpsilon);
    d_net_out[k] = dc_du;
    d_net_out[a + k] = s.log_std_clamped[k] ? 0.0 : -1.0 + dc_du * std::exp(s.log_std[k]) * s.eps[k];
  }
}

double squashed_log_prob_of_action(std::span<const double> net_out, std::span<const double> action,
                                   const ActionScaling& scaling, std::span<double> d_net_out) {
  const std::size_t a = scaling.dim();
  if (net_out.size() != 2 * a || action.size() != a) throw DimensionError("squashed log prob: size mismatch");
  double lp = 0.0;
  for (std::size_t k = 0; k < a; ++k) {
    const double y = std::clamp((action[k] - scaling.bias[k]) / scaling.scale[k], -1.0 + kAtanhClip, 1.0 - kAtanhClip);
    const double u = std::atanh(y);
    const double raw = net_out[a + k];
    const double ls = std::clamp(raw, kLogStdMin, kLogStdMax);
    const double inv_sd = std::exp(-ls);
    const double z = (u - net_out[k]) * inv_sd;
    lp += -0.5 * z * z - ls - kHalfLog2Pi - std::log(1.0 - y * y + kSquashEpsilon);
    if (!d_net_out.empty()) {
      d_net_out[k] = z * inv_sd;
      d_net_out[a + k] = (raw < kLogStdMin || raw > kLogStdMax) ? 0.0 : z * z - 1.0;
    }
  }
  return lp;
}

double tanh_mean_log_prob_of_action(std::span<const double> net_mean, std::span<const double> log_std,
                                    std::span<const double> action, const ActionScaling& scaling,
                                    std::span<double> d_mean, std::span<double> d_log_std) {
  const std::size_t a = scaling.dim();
  if (net_mean.size() < a || log_std.size() != a || action.size() != a) {
    throw DimensionError("tanh-mean log prob: size mismatch");
  }
  double lp = 0.0;
  for (std::size_t k = 0; k < a; ++k) {
    const double y = (action[k] - scaling.bias[k]) / scaling.scale[k];
    const double t = std::tanh(net_mean[k]);
    const double ls = std::clamp(log_std[k], kLogStdMin, kLogStdMax);
    const double inv_sd = std::exp(-ls);
    const double z = (y - t) * inv_sd;
    lp += -0.5 * z * z - ls - kHalfLog2Pi;
    if (!d_mean.empty()) d_mean[k] = z * inv_sd * (1.0 - t * t);
    if (!d_log_std.empty()) d_log_std[k] = (log_std[k] < kLogStdMin || log_std[k] > kLogStdMax) ? 0.0 : z * z - 1.0;
  }
  return lp;
}

std::vector<double> squashed_mean_action(std::span<const double> net_out, const ActionScaling& scaling) {
  std::vector<double> out(scaling.dim());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = scaling.scale[k] * std::tanh(net_out[k]) + scaling.bias[k];
  return out;
}

ActorPolicy::ActorPolicy(std::unique_ptr<Approximator> net, PolicyHead head, ActionScaling scaling)
    : net_(std::move(net)), ws_(net_->make_workspace()), head_(head), scaling_(std::move(scaling)) {}

std::vector<double> ActorPolicy::act(std::span<const double> state) {
  const auto out = net_->forward(state, *ws_);
  if (head_ == PolicyHead::kCategorical) return {static_cast<double>(greedy_action(out))};
  return squashed_mean_action(out, scaling_);
}

Policy ActorPolicy::as_policy() {
  return [this](std::span<const double> s) { return act(s); };
}

void ActorPolicy::save(const std::filesystem::path& path, nlohmann::json extra) const {
  Checkpoint ck;
  ck.metadata = std::move(extra);
  ck.metadata["network"] = net_->describe();
  ck.metadata["head"] = head_ == PolicyHead::kCategorical ? "categorical" : "squashed_gaussian";
  ck.metadata["action_scale"] = scaling_.scale;
  ck.metadata["action_bias"] = scaling_.bias;
  ck.add_store("actor", net_->params());
  ck.save(path);
}

ActorPolicy ActorPolicy::load(const std::filesystem::path& path, nlohmann::json* metadata_out) {
  const Checkpoint ck = Checkpoint::load(path);
  try {
    auto net = network_from_description(ck.metadata.at("network"));
    ck.load_store("actor", net->params());
    const std::string head = ck.metadata.at("head").get<std::string>();
    ActionScaling scaling;
    scaling.scale = ck.metadata.value("action_scale", std::vector<double>{});
    scaling.bias = ck.metadata.value("action_bias", std::vector<double>{});
    if (metadata_out) *metadata_out = ck.metadata;
    if (head == "categorical") return ActorPolicy(std::move(net), PolicyHead::kCategorical);
    if (head == "squashed_gaussian") return ActorPolicy(std::move(net), PolicyHead::kSquashedGaussian, scaling);
    throw IoError("unknown policy head '" + head + "' in checkpoint");
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint metadata incomplete: ") + e.what());
  }
}

std::unique_ptr<ActorPolicy> copy_policy(const ActorPolicy& policy) {
  return std::make_unique<ActorPolicy>(policy.network().clone(), policy.head(), policy.scaling());
}

std::vector<double> evaluate_policy(Env& env, const Policy& policy, int episodes, std::uint64_t seed) {
  std::vector<double> returns;
  returns.reserve(static_cast<std::size_t>(episodes));
  for (int e = 0; e < episodes; ++e) {
    std::vector<double> state = e == 0 ? env.reset(seed) : env.reset();
    double total = 0.0;
    while (true) {
      const Transition tr = env.step(policy(state));
      total += tr.reward;
      if (tr.done()) break;
      state = tr.next_state;
    }
    returns.push_back(total);
  }
  return returns;
}

}  // namespace span_rl
