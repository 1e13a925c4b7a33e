#include "span_rl/dense_array.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "span_rl/errors.hpp"

namespace span_rl {
namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

DenseArray::DenseArray(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(product(shape_), fill) {}

DenseArray::DenseArray(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (product(shape_) != data_.size()) {
    throw DimensionError("shape " + shape_string(shape_) + " does not match " +
                         std::to_string(data_.size()) + " values");
  }
}

DenseArray DenseArray::vector(std::initializer_list<double> values) {
  return DenseArray({values.size()}, std::vector<double>(values));
}

DenseArray DenseArray::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t cols = rows.size() == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(rows.size() * cols);
  for (const auto& row : rows) {
    if (row.size() != cols) throw DimensionError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return DenseArray({rows.size(), cols}, std::move(data));
}

void DenseArray::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool DenseArray::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

DenseArray matvec(const DenseArray& w, const DenseArray& x) {
  if (w.rank() != 2 || x.rank() != 1 || w.extent(1) != x.size()) {
    throw DimensionError("matvec: cannot multiply " + shape_string(w.shape()) + " by " +
                         shape_string(x.shape()));
  }
  DenseArray y({w.extent(0)});
  matvec(w.data(), w.extent(0), w.extent(1), x.data(), y.data());
  return y;
}

void matvec(std::span<const double> w, std::size_t rows, std::size_t cols, std::span<const double> x,
            std::span<double> y) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = w.data() + r * cols;
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
}

void matvec_transposed(std::span<const double> w, std::size_t rows, std::size_t cols,
                       std::span<const double> g, std::span<double> y) {
  std::fill(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(cols), 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = w.data() + r * cols;
    const double gr = g[r];
    for (std::size_t c = 0; c < cols; ++c) y[c] += row[c] * gr;
  }
}

}  // namespace span_rl
