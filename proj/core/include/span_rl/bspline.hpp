#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace span_rl {

// Clamped uniform B-spline basis on [0, 1].
//
// `nelems` equal elements and degree `degree` give nelems + degree basis
// functions over the knot vector
//   0 (degree+1 times), 1/N, 2/N, ..., (N-1)/N, 1 (degree+1 times).
// Intervals are half-open [t_i, t_{i+1}) except the last, which is closed, so
// evaluation is defined everywhere on [0, 1]. At a knot the derivative of a
// degree-1 basis is taken from the right (from the left at x = 1).
class SplineBasis {
 public:
  SplineBasis(int degree, int nelems);

  int degree() const { return degree_; }
  int nelems() const { return nelems_; }
  std::size_t nbasis() const { return static_cast<std::size_t>(nelems_ + degree_); }
  const std::vector<double>& knots() const { return knots_; }

  std::vector<double> eval(double x) const;
  std::vector<double> eval_deriv(double x) const;

  // Writes all nbasis values (and derivatives, when `derivs` is non-empty)
  // into the outputs. Returns the index of the first of the degree+1
  // possibly-nonzero functions; every other entry is exactly zero.
  std::size_t eval_into(double x, std::span<double> values, std::span<double> derivs) const;

 private:
  // Index s with knots[s] <= x < knots[s+1] (last nonempty interval for x = 1).
  std::size_t find_span(double x) const;

  int degree_;
  int nelems_;
  std::vector<double> knots_;
};

}  // namespace span_rl
