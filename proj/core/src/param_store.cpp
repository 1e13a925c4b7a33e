#include "span_rl/param_store.hpp"

#include "span_rl/errors.hpp"

namespace span_rl {

std::size_t ParamStore::add(std::string name, std::vector<std::size_t> shape) {
  if (index_.count(name)) throw InternalError("duplicate parameter name '" + name + "'");
  const std::size_t idx = entries_.size();
  index_.emplace(name, idx);
  ParamEntry e;
  e.name = std::move(name);
  e.value = DenseArray(shape);
  e.grad = DenseArray(shape);
  e.m = DenseArray(shape);
  e.v = DenseArray(std::move(shape));
  entries_.push_back(std::move(e));
  return idx;
}

std::optional<std::size_t> ParamStore::find(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

ParamEntry& ParamStore::at(const std::string& name) {
  auto idx = find(name);
  if (!idx) throw InternalError("no parameter named '" + name + "'");
  return entries_[*idx];
}

const ParamEntry& ParamStore::at(const std::string& name) const {
  auto idx = find(name);
  if (!idx) throw InternalError("no parameter named '" + name + "'");
  return entries_[*idx];
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) e.grad.fill(0.0);
}

double ParamStore::grad_norm_squared() const {
  double s = 0.0;
  for (const auto& e : entries_)
    for (double g : e.grad.data()) s += g * g;
  return s;
}

void ParamStore::scale_grad(double factor) {
  for (auto& e : entries_)
    for (double& g : e.grad.data()) g *= factor;
}

void ParamStore::copy_values_from(const ParamStore& other) {
  if (other.entries_.size() != entries_.size()) throw DimensionError("parameter stores differ in entry count");
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& src = other.entries_[i];
    auto& dst = entries_[i];
    if (src.name != dst.name || !src.value.same_shape(dst.value)) {
      throw DimensionError("parameter entry mismatch: '" + dst.name + "' vs '" + src.name + "'");
    }
    dst.value = src.value;
  }
}

double& ParamStore::flat_value(std::size_t flat_index) {
  for (auto& e : entries_) {
    if (flat_index < e.value.size()) return e.value[flat_index];
    flat_index -= e.value.size();
  }
  throw InternalError("flat parameter index out of range");
}

double ParamStore::flat_grad(std::size_t flat_index) const {
  for (const auto& e : entries_) {
    if (flat_index < e.grad.size()) return e.grad[flat_index];
    flat_index -= e.grad.size();
  }
  throw InternalError("flat parameter index out of range");
}

std::string ParamStore::flat_name(std::size_t flat_index) const {
  for (const auto& e : entries_) {
    if (flat_index < e.value.size()) return e.name + "[" + std::to_string(flat_index) + "]";
    flat_index -= e.value.size();
  }
  throw InternalError("flat parameter index out of range");
}

}  // namespace span_rl
