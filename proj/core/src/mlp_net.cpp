#include "span_rl/mlp_net.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "span_rl/errors.hpp"

namespace span_rl {
namespace {

struct MlpWorkspace final : Workspace {
  std::size_t d = 0, h1 = 0, h2 = 0, o = 0;
  bool filled = false;
  std::vector<double> input, pre1, act1, pre2, act2, out;
  mutable std::vector<double> g2, g1, gin;
};

double activate(Activation a, double x) { return a == Activation::kTanh ? std::tanh(x) : std::max(0.0, x); }

// Derivative expressed through the pre-activation and the activation value.
double activate_grad(Activation a, double pre, double act) {
  if (a == Activation::kTanh) return 1.0 - act * act;
  return pre > 0.0 ? 1.0 : 0.0;
}

const MlpConfig& validated(const MlpConfig& cfg) {
  cfg.validate();
  return cfg;
}

MlpWorkspace& checked(const Workspace& ws, const MlpConfig& cfg) {
  auto* w = dynamic_cast<const MlpWorkspace*>(&ws);
  if (!w || w->d != cfg.input_dim || w->h1 != cfg.hidden1 || w->h2 != cfg.hidden2 || w->o != cfg.output_dim) {
    throw InternalError("mlp: workspace does not belong to this network shape");
  }
  return const_cast<MlpWorkspace&>(*w);
}

}  // namespace

Activation parse_activation(const std::string& name) {
  if (name == "tanh") return Activation::kTanh;
  if (name == "relu") return Activation::kRelu;
  throw UsageError("unknown activation '" + name + "'");
}

std::string to_string(Activation a) { return a == Activation::kTanh ? "tanh" : "relu"; }

void MlpConfig::validate() const {
  if (input_dim < 1 || hidden1 < 1 || hidden2 < 1 || output_dim < 1) {
    throw UsageError("mlp: all layer sizes must be positive");
  }
}

std::size_t mlp_param_count(const MlpConfig& c) {
  return c.input_dim * c.hidden1 + c.hidden1 + c.hidden1 * c.hidden2 + c.hidden2 + c.hidden2 * c.output_dim +
         c.output_dim;
}

MlpNet::MlpNet(const MlpConfig& cfg) : cfg_(validated(cfg)) {
  w1_ = params_.add("l1.weight", {cfg_.hidden1, cfg_.input_dim});
  b1_ = params_.add("l1.bias", {cfg_.hidden1});
  w2_ = params_.add("l2.weight", {cfg_.hidden2, cfg_.hidden1});
  b2_ = params_.add("l2.bias", {cfg_.hidden2});
  w3_ = params_.add("l3.weight", {cfg_.output_dim, cfg_.hidden2});
  b3_ = params_.add("l3.bias", {cfg_.output_dim});
  if (params_.parameter_count() != mlp_param_count(cfg_)) {
    throw InternalError("mlp: parameter count does not match the closed-form count");
  }
}

MlpNet::MlpNet(const MlpConfig& cfg, Philox& init_rng) : MlpNet(cfg) { initialize(init_rng); }

void MlpNet::initialize(Philox& rng) {
  // Fan-in scaled uniform with unit variance gain (sqrt(2) for ReLU).
  const double gain = cfg_.activation == Activation::kRelu ? std::sqrt(2.0) : 1.0;
  auto fill = [&](std::size_t idx, std::size_t fan_in, double scale) {
    const double bound = scale * std::sqrt(3.0 / static_cast<double>(fan_in));
    for (double& w : params_[idx].value.data()) w = rng.uniform(-bound, bound);
  };
  fill(w1_, cfg_.input_dim, gain);
  fill(w2_, cfg_.hidden1, gain);
  fill(w3_, cfg_.hidden2, cfg_.output_init_scale);
  params_[b1_].value.fill(0.0);
  params_[b2_].value.fill(0.0);
  params_[b3_].value.fill(0.0);
}

nlohmann::json MlpNet::describe() const {
  return {{"kind", "mlp"},
          {"input_dim", cfg_.input_dim},
          {"hidden1", cfg_.hidden1},
          {"hidden2", cfg_.hidden2},
          {"output_dim", cfg_.output_dim},
          {"activation", to_string(cfg_.activation)},
          {"output_init_scale", cfg_.output_init_scale}};
}

std::unique_ptr<Workspace> MlpNet::make_workspace() const {
  auto ws = std::make_unique<MlpWorkspace>();
  ws->d = cfg_.input_dim;
  ws->h1 = cfg_.hidden1;
  ws->h2 = cfg_.hidden2;
  ws->o = cfg_.output_dim;
  ws->input.resize(ws->d);
  ws->pre1.resize(ws->h1);
  ws->act1.resize(ws->h1);
  ws->pre2.resize(ws->h2);
  ws->act2.resize(ws->h2);
  ws->out.resize(ws->o);
  ws->g2.resize(ws->h2);
  ws->g1.resize(ws->h1);
  ws->gin.resize(ws->d);
  return ws;
}

std::span<const double> MlpNet::forward(std::span<const double> input, Workspace& wsb) const {
  auto& ws = checked(wsb, cfg_);
  if (input.size() != ws.d) throw DimensionError("mlp: expected input of length " + std::to_string(ws.d));
  for (double v : input) {
    if (!std::isfinite(v)) throw InputError("mlp: non-finite input");
  }
  std::copy(input.begin(), input.end(), ws.input.begin());
  const Activation act = cfg_.activation;

  matvec(params_[w1_].value.data(), ws.h1, ws.d, ws.input, ws.pre1);
  for (std::size_t i = 0; i < ws.h1; ++i) {
    ws.pre1[i] += params_[b1_].value[i];
    ws.act1[i] = activate(act, ws.pre1[i]);
  }
  matvec(params_[w2_].value.data(), ws.h2, ws.h1, ws.act1, ws.pre2);
  for (std::size_t i = 0; i < ws.h2; ++i) {
    ws.pre2[i] += params_[b2_].value[i];
    ws.act2[i] = activate(act, ws.pre2[i]);
  }
  matvec(params_[w3_].value.data(), ws.o, ws.h2, ws.act2, ws.out);
  for (std::size_t i = 0; i < ws.o; ++i) ws.out[i] += params_[b3_].value[i];
  ws.filled = true;
  return ws.out;
}

void MlpNet::backward(const Workspace& wsb, std::span<const double> out_grad, std::span<double> input_grad,
                      bool accumulate_params) {
  auto& ws = checked(wsb, cfg_);
  if (!ws.filled) throw InternalError("mlp: backward without a cached forward pass");
  if (out_grad.size() != ws.o) throw DimensionError("mlp: output gradient has wrong length");
  if (!input_grad.empty() && input_grad.size() != ws.d) throw DimensionError("mlp: input gradient has wrong length");
  const Activation act = cfg_.activation;

  auto accumulate_layer = [&](std::size_t w, std::size_t b, std::span<const double> g, std::span<const double> x) {
    auto& W = params_[w];
    auto& B = params_[b];
    const std::size_t cols = x.size();
    for (std::size_t r = 0; r < g.size(); ++r) {
      B.grad[r] += g[r];
      double* row = W.grad.raw() + r * cols;
      for (std::size_t c = 0; c < cols; ++c) row[c] += g[r] * x[c];
    }
  };

  if (accumulate_params) accumulate_layer(w3_, b3_, out_grad, ws.act2);
  matvec_transposed(params_[w3_].value.data(), ws.o, ws.h2, out_grad, ws.g2);
  for (std::size_t i = 0; i < ws.h2; ++i) ws.g2[i] *= activate_grad(act, ws.pre2[i], ws.act2[i]);

  if (accumulate_params) accumulate_layer(w2_, b2_, ws.g2, ws.act1);
  matvec_transposed(params_[w2_].value.data(), ws.h2, ws.h1, ws.g2, ws.g1);
  for (std::size_t i = 0; i < ws.h1; ++i) ws.g1[i] *= activate_grad(act, ws.pre1[i], ws.act1[i]);

  if (accumulate_params) accumulate_layer(w1_, b1_, ws.g1, ws.input);
  if (!input_grad.empty()) matvec_transposed(params_[w1_].value.data(), ws.h1, ws.d, ws.g1, input_grad);
}

std::unique_ptr<Approximator> MlpNet::clone() const { return std::make_unique<MlpNet>(*this); }

}  // namespace span_rl
