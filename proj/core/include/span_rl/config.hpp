#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "span_rl/iql.hpp"
#include "span_rl/networks.hpp"
#include "span_rl/ppo.hpp"
#include "span_rl/sac.hpp"

namespace span_rl {

// Architecture fields shared by every SPAN network of a run.
struct SpanArch {
  std::size_t nmodes = 1;
  int nelems = 2;
  int degree = 1;
  double head_init_scale = 1.0;

  bool operator==(const SpanArch&) const = default;
};

// Hidden-layer sizes per MLP role.
struct MlpArch {
  std::size_t actor_hidden1 = 64, actor_hidden2 = 64;
  std::size_t critic_hidden1 = 64, critic_hidden2 = 64;
  std::size_t value_hidden1 = 64, value_hidden2 = 64;
  Activation activation = Activation::kTanh;
  double actor_output_scale = 1.0;

  bool operator==(const MlpArch&) const = default;
};

// One-axis-at-a-time architecture grid around the base [span] settings.
struct SweepAxes {
  std::vector<std::size_t> nmodes;
  std::vector<int> nelems;
  std::vector<int> degree;

  bool empty() const { return nmodes.empty() && nelems.empty() && degree.empty(); }
  bool operator==(const SweepAxes&) const = default;
};

struct DatasetSettings {
  std::string tag = "expert";
  std::size_t size = 50'000;
  double noise = 0.0;
  std::uint64_t seed = 0;
  int anchor_episodes = 100;
  std::string checkpoint;         // behavior policy
  std::string expert_checkpoint;  // anchor policy; defaults to `checkpoint` for the expert tag
  std::string file;               // output path; defaults to <out>/dataset_<tag>.bin

  bool operator==(const DatasetSettings&) const = default;
};

// Complete description of a run. Text form:
//
//   # comment
//   [run]
//   env = CartPole
//   algo = ppo
//   ...
//
// Sections: run, span, mlp, ppo, sac, iql, metrics, sweep, dataset.
// Unknown sections or keys are errors.
struct RunConfig {
  std::string env = "CartPole";
  std::string algo = "ppo";
  NetKind net = NetKind::kSpan;
  std::vector<std::uint64_t> seeds{0};
  std::uint64_t total_steps = 500'000;
  std::string out;

  SpanArch span;
  MlpArch mlp;
  PpoConfig ppo;
  SacConfig sac;
  IqlConfig iql;
  std::string iql_dataset;
  double negative_floor = kDefaultNegativeFloor;
  SweepAxes sweep;
  DatasetSettings dataset;

  NetSpec actor_spec() const;
  NetSpec critic_spec() const;
  NetSpec value_spec() const;

  bool operator==(const RunConfig&) const = default;
};

// Parses config text. Keys missing from the text keep their defaults, except
// that mlp.activation and mlp.actor_output_scale default by algorithm
// (tanh and 0.01 for ppo, relu and 1 otherwise). Throws ConfigError carrying
// the offending line.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

// Canonical text listing every field; parse_config(serialize_config(c)) == c.
std::string serialize_config(const RunConfig& cfg);

// 16 hex digits of FNV-1a over the canonical text without seeds and output
// directory, so runs of one experiment share it.
std::string config_fingerprint(const RunConfig& cfg);

// "0,1,2", "0-4" or mixtures such as "0-2,7".
std::vector<std::uint64_t> parse_seed_list(const std::string& text);

}  // namespace span_rl
