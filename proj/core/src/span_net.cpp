#include "span_rl/span_net.hpp"

#include <algorithm>
#include <cmath>

#include "span_rl/errors.hpp"

namespace span_rl {
namespace {

struct SpanWorkspace final : Workspace {
  std::size_t d = 0, m = 0, nb = 0, o = 0;
  bool filled = false;
  std::vector<double> input;    // d
  std::vector<double> z;        // d
  std::vector<double> basis;    // d x nb
  std::vector<double> dbasis;   // d x nb
  std::vector<std::size_t> first;  // d, first nonzero basis index
  std::vector<double> sums;     // d x M
  std::vector<double> modes;    // M
  std::vector<double> out;      // o
  // backward scratch
  mutable std::vector<double> mode_grad;  // M
  mutable std::vector<double> prefix;     // d + 1
  mutable std::vector<double> z_grad;     // d
};

double sigmoid(double a) {
  if (a >= 0.0) return 1.0 / (1.0 + std::exp(-a));
  const double e = std::exp(a);
  return e / (1.0 + e);
}

}  // namespace

void SpanConfig::validate() const {
  if (input_dim < 1 || output_dim < 1 || nmodes < 1 || nelems < 1 || degree < 1) {
    throw UsageError("span: dimensions, nmodes, nelems and degree must all be positive");
  }
}

std::size_t span_param_count(const SpanConfig& cfg) {
  const std::size_t d = cfg.input_dim;
  const std::size_t nb = static_cast<std::size_t>(cfg.nelems + cfg.degree);
  return (d * d + d) + cfg.nmodes * d * nb + (cfg.nmodes * cfg.output_dim + cfg.output_dim);
}

namespace {

const SpanConfig& validated(const SpanConfig& cfg) {
  cfg.validate();
  return cfg;
}

}  // namespace

SpanNet::SpanNet(const SpanConfig& cfg) : cfg_(validated(cfg)), basis_(cfg_.degree, cfg_.nelems) {
  const std::size_t d = cfg_.input_dim;
  pre_w_ = params_.add("pre.weight", {d, d});
  pre_b_ = params_.add("pre.bias", {d});
  spline_w_ = params_.add("spline.weight", {d, cfg_.nmodes, basis_.nbasis()});
  head_w_ = params_.add("head.weight", {cfg_.output_dim, cfg_.nmodes});
  head_b_ = params_.add("head.bias", {cfg_.output_dim});
  if (params_.parameter_count() != span_param_count(cfg_)) {
    throw InternalError("span: parameter count does not match the closed-form count");
  }
}

SpanNet::SpanNet(const SpanConfig& cfg, Philox& init_rng) : SpanNet(cfg) { initialize(init_rng); }

void SpanNet::initialize(Philox& rng) {
  const double pre_bound = 1.0 / std::sqrt(static_cast<double>(cfg_.input_dim));
  for (double& w : params_[pre_w_].value.data()) w = rng.uniform(-pre_bound, pre_bound);
  params_[pre_b_].value.fill(0.0);
  for (double& w : params_[spline_w_].value.data()) w = 1.0 + rng.uniform(-0.1, 0.1);
  const double head_bound = cfg_.head_init_scale / std::sqrt(static_cast<double>(cfg_.nmodes));
  for (double& w : params_[head_w_].value.data()) w = rng.uniform(-head_bound, head_bound);
  params_[head_b_].value.fill(0.0);
}

nlohmann::json SpanNet::describe() const {
  return {{"kind", "span"},         {"input_dim", cfg_.input_dim}, {"output_dim", cfg_.output_dim},
          {"nmodes", cfg_.nmodes},  {"nelems", cfg_.nelems},       {"degree", cfg_.degree},
          {"head_init_scale", cfg_.head_init_scale}};
}

std::unique_ptr<Workspace> SpanNet::make_workspace() const {
  auto ws = std::make_unique<SpanWorkspace>();
  ws->d = cfg_.input_dim;
  ws->m = cfg_.nmodes;
  ws->nb = basis_.nbasis();
  ws->o = cfg_.output_dim;
  ws->input.resize(ws->d);
  ws->z.resize(ws->d);
  ws->basis.resize(ws->d * ws->nb);
  ws->dbasis.resize(ws->d * ws->nb);
  ws->first.resize(ws->d);
  ws->sums.resize(ws->d * ws->m);
  ws->modes.resize(ws->m);
  ws->out.resize(ws->o);
  ws->mode_grad.resize(ws->m);
  ws->prefix.resize(ws->d + 1);
  ws->z_grad.resize(ws->d);
  return ws;
}

namespace {

SpanWorkspace& checked(Workspace& ws, const SpanConfig& cfg, std::size_t nb) {
  auto* w = dynamic_cast<SpanWorkspace*>(&ws);
  if (!w || w->d != cfg.input_dim || w->m != cfg.nmodes || w->nb != nb || w->o != cfg.output_dim) {
    throw InternalError("span: workspace does not belong to this network shape");
  }
  return *w;
}

}  // namespace

std::span<const double> SpanNet::forward(std::span<const double> input, Workspace& wsb) const {
  auto& ws = checked(wsb, cfg_, basis_.nbasis());
  const std::size_t d = ws.d, m = ws.m, nb = ws.nb, o = ws.o;
  if (input.size() != d) throw DimensionError("span: expected input of length " + std::to_string(d));
  for (double v : input) {
    if (!std::isfinite(v)) throw InputError("span: non-finite input");
  }
  std::copy(input.begin(), input.end(), ws.input.begin());

  const auto& pw = params_[pre_w_].value;
  const auto& pb = params_[pre_b_].value;
  matvec(pw.data(), d, d, input, ws.z);
  for (std::size_t p = 0; p < d; ++p) {
    ws.z[p] = sigmoid(ws.z[p] + pb[p]);
    ws.first[p] = basis_.eval_into(ws.z[p], std::span(ws.basis).subspan(p * nb, nb),
                                   std::span(ws.dbasis).subspan(p * nb, nb));
  }

  const auto& sw = params_[spline_w_].value;
  const std::size_t active = static_cast<std::size_t>(cfg_.degree) + 1;
  std::fill(ws.modes.begin(), ws.modes.end(), 1.0);
  for (std::size_t p = 0; p < d; ++p) {
    const double* b = ws.basis.data() + p * nb;
    const std::size_t lo = ws.first[p];
    for (std::size_t j = 0; j < m; ++j) {
      const double* w = sw.raw() + (p * m + j) * nb;
      double s = 0.0;
      for (std::size_t i = lo; i < lo + active; ++i) s += w[i] * b[i];
      ws.sums[p * m + j] = s;
      ws.modes[j] *= s;
    }
  }

  const auto& hw = params_[head_w_].value;
  const auto& hb = params_[head_b_].value;
  matvec(hw.data(), o, m, ws.modes, ws.out);
  for (std::size_t r = 0; r < o; ++r) ws.out[r] += hb[r];
  ws.filled = true;
  return ws.out;
}

void SpanNet::backward(const Workspace& wsb, std::span<const double> out_grad, std::span<double> input_grad,
                       bool accumulate_params) {
  auto& ws = checked(const_cast<Workspace&>(wsb), cfg_, basis_.nbasis());
  if (!ws.filled) throw InternalError("span: backward without a cached forward pass");
  const std::size_t d = ws.d, m = ws.m, nb = ws.nb, o = ws.o;
  if (out_grad.size() != o) throw DimensionError("span: output gradient has wrong length");
  if (!input_grad.empty() && input_grad.size() != d) throw DimensionError("span: input gradient has wrong length");

  auto& head_w = params_[head_w_];
  if (accumulate_params) {
    auto& head_b = params_[head_b_];
    for (std::size_t r = 0; r < o; ++r) {
      head_b.grad[r] += out_grad[r];
      for (std::size_t j = 0; j < m; ++j) head_w.grad(r, j) += out_grad[r] * ws.modes[j];
    }
  }
  matvec_transposed(head_w.value.data(), o, m, out_grad, ws.mode_grad);

  auto& spline = params_[spline_w_];
  const std::size_t active = static_cast<std::size_t>(cfg_.degree) + 1;
  std::fill(ws.z_grad.begin(), ws.z_grad.end(), 0.0);
  for (std::size_t j = 0; j < m; ++j) {
    const double gm = ws.mode_grad[j];
    if (gm == 0.0) continue;
    // prod_{q != p} S[q,j] from prefix and suffix products (no division, so
    // zero sums are handled).
    ws.prefix[0] = 1.0;
    for (std::size_t p = 0; p < d; ++p) ws.prefix[p + 1] = ws.prefix[p] * ws.sums[p * m + j];
    double suffix = 1.0;
    for (std::size_t p = d; p-- > 0;) {
      const double gs = gm * ws.prefix[p] * suffix;
      suffix *= ws.sums[p * m + j];
      const std::size_t lo = ws.first[p];
      const double* b = ws.basis.data() + p * nb;
      const double* db = ws.dbasis.data() + p * nb;
      const double* w = spline.value.raw() + (p * m + j) * nb;
      double* gw = spline.grad.raw() + (p * m + j) * nb;
      double dsdz = 0.0;
      for (std::size_t i = lo; i < lo + active; ++i) {
        if (accumulate_params) gw[i] += gs * b[i];
        dsdz += w[i] * db[i];
      }
      ws.z_grad[p] += gs * dsdz;
    }
  }

  // Through the sigmoid: da = dz * z (1 - z).
  for (std::size_t p = 0; p < d; ++p) ws.z_grad[p] *= ws.z[p] * (1.0 - ws.z[p]);
  if (accumulate_params) {
    auto& pre_w = params_[pre_w_];
    auto& pre_b = params_[pre_b_];
    for (std::size_t p = 0; p < d; ++p) {
      const double ga = ws.z_grad[p];
      pre_b.grad[p] += ga;
      for (std::size_t q = 0; q < d; ++q) pre_w.grad(p, q) += ga * ws.input[q];
    }
  }
  if (!input_grad.empty()) matvec_transposed(params_[pre_w_].value.data(), d, d, ws.z_grad, input_grad);
}

std::unique_ptr<Approximator> SpanNet::clone() const { return std::make_unique<SpanNet>(*this); }

SpanNet::Trace SpanNet::trace(const Workspace& wsb) const {
  const auto& ws = checked(const_cast<Workspace&>(wsb), cfg_, basis_.nbasis());
  return {ws.z, ws.sums, ws.modes};
}

}  // namespace span_rl
