#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace span_rl {

// Contiguous row-major array of doubles with an explicit shape.
class DenseArray {
 public:
  DenseArray() = default;
  explicit DenseArray(std::vector<std::size_t> shape, double fill = 0.0);
  DenseArray(std::vector<std::size_t> shape, std::vector<double> data);

  static DenseArray vector(std::initializer_list<double> values);
  static DenseArray matrix(std::initializer_list<std::initializer_list<double>> rows);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double* raw() { return data_.data(); }
  const double* raw() const { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  void fill(double v);
  bool all_finite() const;
  bool same_shape(const DenseArray& other) const { return shape_ == other.shape_; }

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

std::string shape_string(const std::vector<std::size_t>& shape);

// y = W x. Throws DimensionError unless W is rank-2 with cols == len(x).
DenseArray matvec(const DenseArray& w, const DenseArray& x);
// Allocation-free kernel: w is rows x cols row-major.
void matvec(std::span<const double> w, std::size_t rows, std::size_t cols, std::span<const double> x,
            std::span<double> y);
// y = W^T g.
void matvec_transposed(std::span<const double> w, std::size_t rows, std::size_t cols,
                       std::span<const double> g, std::span<double> y);

}  // namespace span_rl
