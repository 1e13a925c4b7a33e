#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "span_rl/network.hpp"
#include "span_rl/optim.hpp"
#include "span_rl/rng.hpp"

// Reference implementations written independently of the library, used as
// test oracles.
namespace oracle {

inline std::vector<double> clamped_knots(int degree, int nelems) {
  std::vector<double> t;
  for (int i = 0; i <= degree; ++i) t.push_back(0.0);
  for (int i = 1; i < nelems; ++i) t.push_back(static_cast<double>(i) / nelems);
  for (int i = 0; i <= degree; ++i) t.push_back(1.0);
  return t;
}

// Cox-de Boor recursion with the last nonempty interval closed at 1.
inline double basis(const std::vector<double>& t, int i, int k, double x) {
  if (k == 0) {
    if (t[i] <= x && x < t[i + 1]) return 1.0;
    return (x == t.back() && t[i] < t[i + 1] && t[i + 1] == t.back()) ? 1.0 : 0.0;
  }
  double a = 0.0, b = 0.0;
  if (t[i + k] != t[i]) a = (x - t[i]) / (t[i + k] - t[i]) * basis(t, i, k - 1, x);
  if (t[i + k + 1] != t[i + 1]) b = (t[i + k + 1] - x) / (t[i + k + 1] - t[i + 1]) * basis(t, i + 1, k - 1, x);
  return a + b;
}

inline std::vector<double> basis_all(int degree, int nelems, double x) {
  const auto t = clamped_knots(degree, nelems);
  std::vector<double> out(static_cast<std::size_t>(nelems + degree));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = basis(t, static_cast<int>(i), degree, x);
  return out;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Random quadratic loss sum_n sum_k c_k (f(x_n)_k - y_nk)^2 over a few
// random inputs, with analytic gradients accumulated through backward().
struct QuadraticLoss {
  span_rl::Approximator* net;
  std::vector<std::vector<double>> inputs;
  std::vector<std::vector<double>> targets;
  std::vector<double> coef;

  QuadraticLoss(span_rl::Approximator& n, span_rl::Philox& rng, int samples = 3, double input_scale = 2.0)
      : net(&n) {
    for (int s = 0; s < samples; ++s) {
      std::vector<double> x(n.input_dim()), y(n.output_dim());
      for (double& v : x) v = rng.uniform(-input_scale, input_scale);
      for (double& v : y) v = rng.uniform(-1.0, 1.0);
      inputs.push_back(x);
      targets.push_back(y);
    }
    for (std::size_t k = 0; k < n.output_dim(); ++k) coef.push_back(rng.uniform(0.5, 1.5));
  }

  double operator()(bool with_grad) const {
    auto ws = net->make_workspace();
    double loss = 0.0;
    std::vector<double> g(net->output_dim());
    for (std::size_t s = 0; s < inputs.size(); ++s) {
      const auto out = net->forward(inputs[s], *ws);
      for (std::size_t k = 0; k < out.size(); ++k) {
        const double e = out[k] - targets[s][k];
        loss += coef[k] * e * e;
        g[k] = 2.0 * coef[k] * e;
      }
      if (with_grad) net->backward(*ws, g, {});
    }
    return loss;
  }

  span_rl::LossFn fn() const {
    return [this](bool with_grad) { return (*this)(with_grad); };
  }
};

}  // namespace oracle
