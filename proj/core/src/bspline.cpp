#include "span_rl/bspline.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "span_rl/errors.hpp"

namespace span_rl {
namespace {

constexpr int kMaxDegree = 16;

}  // namespace

SplineBasis::SplineBasis(int degree, int nelems) : degree_(degree), nelems_(nelems) {
  if (degree < 1 || degree > kMaxDegree) throw DomainError("spline degree must be in [1, 16]");
  if (nelems < 1) throw DomainError("spline element count must be >= 1");
  knots_.reserve(static_cast<std::size_t>(nelems + 2 * degree + 1));
  for (int i = 0; i <= degree; ++i) knots_.push_back(0.0);
  for (int i = 1; i < nelems; ++i) knots_.push_back(static_cast<double>(i) / nelems);
  for (int i = 0; i <= degree; ++i) knots_.push_back(1.0);
}

std::size_t SplineBasis::find_span(double x) const {
  const auto k = static_cast<std::size_t>(degree_);
  const auto last = k + static_cast<std::size_t>(nelems_) - 1;
  auto s = k + static_cast<std::size_t>(std::clamp(std::floor(x * nelems_), 0.0, double(nelems_ - 1)));
  // floor(x * N) can land one element off near a knot; settle on the knots.
  while (s > k && x < knots_[s]) --s;
  while (s < last && x >= knots_[s + 1]) ++s;
  return s;
}

std::vector<double> SplineBasis::eval(double x) const {
  std::vector<double> out(nbasis());
  eval_into(x, out, {});
  return out;
}

std::vector<double> SplineBasis::eval_deriv(double x) const {
  std::vector<double> values(nbasis());
  std::vector<double> derivs(nbasis());
  eval_into(x, values, derivs);
  return derivs;
}

std::size_t SplineBasis::eval_into(double x, std::span<double> values, std::span<double> derivs) const {
  if (!(x >= 0.0 && x <= 1.0)) throw DomainError("spline input outside [0, 1]: " + std::to_string(x));
  const int k = degree_;
  const std::size_t s = find_span(x);
  const std::size_t first = s - static_cast<std::size_t>(k);

  // Cox-de Boor triangle; after pass j, n[0..j] hold the degree-j functions
  // N_{s-j}, ..., N_s. The degree k-1 row is kept for the derivative.
  std::array<double, kMaxDegree + 1> n{};
  std::array<double, kMaxDegree + 1> lower{};
  std::array<double, kMaxDegree + 1> left{};
  std::array<double, kMaxDegree + 1> right{};
  n[0] = 1.0;
  for (int j = 1; j <= k; ++j) {
    if (j == k) lower = n;
    left[j] = x - knots_[s + 1 - j];
    right[j] = knots_[s + j] - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double temp = n[r] / (right[r + 1] + left[j - r]);
      n[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    n[j] = saved;
  }

  std::fill(values.begin(), values.end(), 0.0);
  for (int r = 0; r <= k; ++r) values[first + r] = n[r];

  if (!derivs.empty()) {
    std::fill(derivs.begin(), derivs.end(), 0.0);
    // lower[r] is N_{s-k+1+r, k-1}. dN_{i,k} = k/(t_{i+k}-t_i) N_{i,k-1}
    //                                      - k/(t_{i+k+1}-t_{i+1}) N_{i+1,k-1}.
    for (int r = 0; r <= k; ++r) {
      const std::size_t i = first + r;
      double d = 0.0;
      if (r >= 1) {
        const double span = knots_[i + k] - knots_[i];
        if (span > 0.0) d += k * lower[r - 1] / span;
      }
      if (r < k) {
        const double span = knots_[i + k + 1] - knots_[i + 1];
        if (span > 0.0) d -= k * lower[r] / span;
      }
      derivs[first + r] = d;
    }
  }
  return first;
}

}  // namespace span_rl
