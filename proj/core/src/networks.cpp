#include "span_rl/networks.hpp"

#include "span_rl/errors.hpp"

namespace span_rl {

NetKind parse_net_kind(const std::string& name) {
  if (name == "span") return NetKind::kSpan;
  if (name == "mlp") return NetKind::kMlp;
  throw UsageError("unknown network kind '" + name + "' (expected span or mlp)");
}

std::string to_string(NetKind k) { return k == NetKind::kSpan ? "span" : "mlp"; }

std::unique_ptr<Approximator> make_network(const NetSpec& spec, std::size_t input_dim, std::size_t output_dim,
                                           Philox& init_rng) {
  if (spec.kind == NetKind::kSpan) {
    SpanConfig cfg;
    cfg.input_dim = input_dim;
    cfg.output_dim = output_dim;
    cfg.nmodes = spec.nmodes;
    cfg.nelems = spec.nelems;
    cfg.degree = spec.degree;
    cfg.head_init_scale = spec.output_init_scale;
    return std::make_unique<SpanNet>(cfg, init_rng);
  }
  MlpConfig cfg;
  cfg.input_dim = input_dim;
  cfg.hidden1 = spec.hidden1;
  cfg.hidden2 = spec.hidden2;
  cfg.output_dim = output_dim;
  cfg.activation = spec.activation;
  cfg.output_init_scale = spec.output_init_scale;
  return std::make_unique<MlpNet>(cfg, init_rng);
}

std::unique_ptr<Approximator> network_from_description(const nlohmann::json& desc) {
  try {
    const std::string kind = desc.at("kind").get<std::string>();
    if (kind == "span") {
      SpanConfig cfg;
      cfg.input_dim = desc.at("input_dim").get<std::size_t>();
      cfg.output_dim = desc.at("output_dim").get<std::size_t>();
      cfg.nmodes = desc.at("nmodes").get<std::size_t>();
      cfg.nelems = desc.at("nelems").get<int>();
      cfg.degree = desc.at("degree").get<int>();
      cfg.head_init_scale = desc.value("head_init_scale", 1.0);
      return std::make_unique<SpanNet>(cfg);
    }
    if (kind == "mlp") {
      MlpConfig cfg;
      cfg.input_dim = desc.at("input_dim").get<std::size_t>();
      cfg.hidden1 = desc.at("hidden1").get<std::size_t>();
      cfg.hidden2 = desc.at("hidden2").get<std::size_t>();
      cfg.output_dim = desc.at("output_dim").get<std::size_t>();
      cfg.activation = parse_activation(desc.at("activation").get<std::string>());
      cfg.output_init_scale = desc.value("output_init_scale", 1.0);
      return std::make_unique<MlpNet>(cfg);
    }
    throw IoError("unknown network kind '" + kind + "' in description");
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed network description: ") + e.what());
  }
}

}  // namespace span_rl
