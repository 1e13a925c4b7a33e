#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "span_rl/dense_array.hpp"

namespace span_rl {

struct ParamEntry {
  std::string name;
  DenseArray value;
  DenseArray grad;
  // Adam moments.
  DenseArray m;
  DenseArray v;
};

// Ordered, named collection of trainable arrays with matching gradient slots
// and optimizer state. Entries are never removed, so indices stay valid.
class ParamStore {
 public:
  // Adds a zero-initialized entry and returns its index.
  std::size_t add(std::string name, std::vector<std::size_t> shape);

  std::size_t size() const { return entries_.size(); }
  ParamEntry& operator[](std::size_t i) { return entries_[i]; }
  const ParamEntry& operator[](std::size_t i) const { return entries_[i]; }
  std::optional<std::size_t> find(const std::string& name) const;
  ParamEntry& at(const std::string& name);
  const ParamEntry& at(const std::string& name) const;

  std::span<ParamEntry> entries() { return entries_; }
  std::span<const ParamEntry> entries() const { return entries_; }

  std::size_t parameter_count() const;
  void zero_grad();
  double grad_norm_squared() const;
  void scale_grad(double factor);

  // Adam step counter, shared by all entries.
  std::uint64_t step() const { return step_; }
  void set_step(std::uint64_t t) { step_ = t; }

  // Copies values from a store with identical names and shapes.
  void copy_values_from(const ParamStore& other);

  // Flat views used by gradient checks and tests.
  double& flat_value(std::size_t flat_index);
  double flat_grad(std::size_t flat_index) const;
  std::string flat_name(std::size_t flat_index) const;

 private:
  std::vector<ParamEntry> entries_;
  std::map<std::string, std::size_t> index_;
  std::uint64_t step_ = 0;
};

}  // namespace span_rl
