#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "span_rl/dense_array.hpp"
#include "span_rl/param_store.hpp"

namespace span_rl {

// Named-array container shared by every network type.
//
// Layout (all integers and floats little-endian):
//   char[8]  magic "SPANRLCK"
//   u32      version (1)
//   u32      metadata length, then that many bytes of UTF-8 JSON
//   u32      array count
//   per array:
//     u32 name length, name bytes
//     u32 rank, u64 extents[rank]
//     f64 values[prod(extents)]
struct NamedArray {
  std::string name;
  DenseArray value;
};

struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  nlohmann::json metadata = nlohmann::json::object();
  std::vector<NamedArray> arrays;

  // Appends every entry of `store` as "<prefix>.<entry name>".
  void add_store(const std::string& prefix, const ParamStore& store);
  // Copies "<prefix>.*" arrays back into a store of matching layout.
  void load_store(const std::string& prefix, ParamStore& store) const;

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
};

}  // namespace span_rl
