#pragma once

#include <cstddef>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "span_rl/mlp_net.hpp"
#include "span_rl/network.hpp"
#include "span_rl/rng.hpp"
#include "span_rl/span_net.hpp"

namespace span_rl {

enum class NetKind { kSpan, kMlp };

NetKind parse_net_kind(const std::string& name);
std::string to_string(NetKind k);

// Architecture of one network, independent of its input/output sizes.
struct NetSpec {
  NetKind kind = NetKind::kSpan;
  std::size_t nmodes = 1;
  int nelems = 2;
  int degree = 1;
  std::size_t hidden1 = 64;
  std::size_t hidden2 = 64;
  Activation activation = Activation::kTanh;
  double output_init_scale = 1.0;

  bool operator==(const NetSpec&) const = default;
};

std::unique_ptr<Approximator> make_network(const NetSpec& spec, std::size_t input_dim, std::size_t output_dim,
                                           Philox& init_rng);

// Rebuilds a zero-initialized network from Approximator::describe() output.
std::unique_ptr<Approximator> network_from_description(const nlohmann::json& desc);

}  // namespace span_rl
