#include "span_rl/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "span_rl/envs.hpp"
#include "span_rl/errors.hpp"
#include "span_rl/metrics.hpp"

namespace span_rl {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(trim(item));
  return out;
}

template <typename T>
T parse_integer(const std::string& v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
    throw UsageError("'" + v + "' is not a valid integer");
  }
  return out;
}

// ---- value codecs -----------------------------------------------------------

std::string format_value(std::uint64_t v) { return std::to_string(v); }
std::string format_value(int v) { return std::to_string(v); }
std::string format_value(double v) { return format_double(v); }
std::string format_value(bool v) { return v ? "true" : "false"; }
std::string format_value(const std::string& v) { return v; }
std::string format_value(Activation v) { return to_string(v); }
std::string format_value(NetKind v) { return to_string(v); }
template <typename T>
std::string format_value(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + format_value(v[i]);
  return out;
}

void parse_value(const std::string& v, std::uint64_t& out) { out = parse_integer<std::uint64_t>(v); }
void parse_value(const std::string& v, int& out) { out = parse_integer<int>(v); }
void parse_value(const std::string& v, double& out) {
  char* end = nullptr;
  out = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size()) throw UsageError("'" + v + "' is not a valid number");
}
void parse_value(const std::string& v, bool& out) {
  if (v == "true" || v == "yes" || v == "1") {
    out = true;
  } else if (v == "false" || v == "no" || v == "0") {
    out = false;
  } else {
    throw UsageError("'" + v + "' is not a boolean (true/false)");
  }
}
void parse_value(const std::string& v, std::string& out) { out = v; }
void parse_value(const std::string& v, Activation& out) { out = parse_activation(v); }
void parse_value(const std::string& v, NetKind& out) { out = parse_net_kind(v); }
void parse_value(const std::string& v, std::vector<std::uint64_t>& out) { out = v.empty() ? std::vector<std::uint64_t>{} : parse_seed_list(v); }
void parse_value(const std::string& v, std::vector<int>& out) {
  out.clear();
  if (v.empty()) return;
  for (const auto& item : split(v, ',')) out.push_back(parse_integer<int>(item));
}

struct Field {
  std::string section;
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

template <typename Access>
Field field(std::string section, std::string key, Access access) {
  return {std::move(section), std::move(key), [access](const RunConfig& c) { return format_value(access(c)); },
          [access](RunConfig& c, const std::string& v) { parse_value(v, access(c)); }};
}

#define SPAN_RL_FIELD(section, key, expr) field(section, key, [](auto& c) -> auto& { return c.expr; })

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      SPAN_RL_FIELD("run", "env", env),
      SPAN_RL_FIELD("run", "algo", algo),
      SPAN_RL_FIELD("run", "net", net),
      SPAN_RL_FIELD("run", "seeds", seeds),
      SPAN_RL_FIELD("run", "total_steps", total_steps),
      SPAN_RL_FIELD("run", "out", out),

      SPAN_RL_FIELD("span", "nmodes", span.nmodes),
      SPAN_RL_FIELD("span", "nelems", span.nelems),
      SPAN_RL_FIELD("span", "degree", span.degree),
      SPAN_RL_FIELD("span", "head_init_scale", span.head_init_scale),

      SPAN_RL_FIELD("mlp", "actor_hidden1", mlp.actor_hidden1),
      SPAN_RL_FIELD("mlp", "actor_hidden2", mlp.actor_hidden2),
      SPAN_RL_FIELD("mlp", "critic_hidden1", mlp.critic_hidden1),
      SPAN_RL_FIELD("mlp", "critic_hidden2", mlp.critic_hidden2),
      SPAN_RL_FIELD("mlp", "value_hidden1", mlp.value_hidden1),
      SPAN_RL_FIELD("mlp", "value_hidden2", mlp.value_hidden2),
      SPAN_RL_FIELD("mlp", "activation", mlp.activation),
      SPAN_RL_FIELD("mlp", "actor_output_scale", mlp.actor_output_scale),

      SPAN_RL_FIELD("ppo", "rollout_batch", ppo.rollout_batch),
      SPAN_RL_FIELD("ppo", "minibatch", ppo.minibatch),
      SPAN_RL_FIELD("ppo", "update_epochs", ppo.update_epochs),
      SPAN_RL_FIELD("ppo", "gamma", ppo.gamma),
      SPAN_RL_FIELD("ppo", "gae_lambda", ppo.gae_lambda),
      SPAN_RL_FIELD("ppo", "clip", ppo.clip),
      SPAN_RL_FIELD("ppo", "value_coef", ppo.value_coef),
      SPAN_RL_FIELD("ppo", "entropy_coef", ppo.entropy_coef),
      SPAN_RL_FIELD("ppo", "max_grad_norm", ppo.max_grad_norm),
      SPAN_RL_FIELD("ppo", "lr", ppo.lr),
      SPAN_RL_FIELD("ppo", "normalize_advantages", ppo.normalize_advantages),
      SPAN_RL_FIELD("ppo", "eval_interval", ppo.eval_interval),
      SPAN_RL_FIELD("ppo", "eval_episodes", ppo.eval_episodes),

      SPAN_RL_FIELD("sac", "batch", sac.batch),
      SPAN_RL_FIELD("sac", "buffer_capacity", sac.buffer_capacity),
      SPAN_RL_FIELD("sac", "warmup_steps", sac.warmup_steps),
      SPAN_RL_FIELD("sac", "tau", sac.tau),
      SPAN_RL_FIELD("sac", "gamma", sac.gamma),
      SPAN_RL_FIELD("sac", "lr", sac.lr),
      SPAN_RL_FIELD("sac", "target_entropy_scale", sac.target_entropy_scale),
      SPAN_RL_FIELD("sac", "max_grad_norm", sac.max_grad_norm),
      SPAN_RL_FIELD("sac", "init_log_alpha", sac.init_log_alpha),
      SPAN_RL_FIELD("sac", "eval_interval", sac.eval_interval),
      SPAN_RL_FIELD("sac", "eval_episodes", sac.eval_episodes),

      SPAN_RL_FIELD("iql", "dataset", iql_dataset),
      SPAN_RL_FIELD("iql", "batch", iql.batch),
      SPAN_RL_FIELD("iql", "gamma", iql.gamma),
      SPAN_RL_FIELD("iql", "expectile", iql.expectile),
      SPAN_RL_FIELD("iql", "temperature", iql.temperature),
      SPAN_RL_FIELD("iql", "tau", iql.tau),
      SPAN_RL_FIELD("iql", "weight_clip", iql.weight_clip),
      SPAN_RL_FIELD("iql", "lr", iql.lr),
      SPAN_RL_FIELD("iql", "eval_episodes", iql.eval_episodes),
      SPAN_RL_FIELD("iql", "likelihood", iql.likelihood),

      SPAN_RL_FIELD("metrics", "negative_floor", negative_floor),

      SPAN_RL_FIELD("sweep", "nmodes", sweep.nmodes),
      SPAN_RL_FIELD("sweep", "nelems", sweep.nelems),
      SPAN_RL_FIELD("sweep", "degree", sweep.degree),

      SPAN_RL_FIELD("dataset", "tag", dataset.tag),
      SPAN_RL_FIELD("dataset", "size", dataset.size),
      SPAN_RL_FIELD("dataset", "noise", dataset.noise),
      SPAN_RL_FIELD("dataset", "seed", dataset.seed),
      SPAN_RL_FIELD("dataset", "anchor_episodes", dataset.anchor_episodes),
      SPAN_RL_FIELD("dataset", "checkpoint", dataset.checkpoint),
      SPAN_RL_FIELD("dataset", "expert_checkpoint", dataset.expert_checkpoint),
      SPAN_RL_FIELD("dataset", "file", dataset.file),
  };
  return table;
}

#undef SPAN_RL_FIELD

// Where each key and section was seen, for diagnostics.
struct SourceLines {
  std::map<std::string, int> keys;  // "section.key"
  std::map<std::string, int> sections;

  int of(const std::string& section, const std::string& key) const {
    if (auto it = keys.find(section + "." + key); it != keys.end()) return it->second;
    if (auto it = sections.find(section); it != sections.end()) return it->second;
    return 0;
  }
};

void validate(RunConfig& c, const SourceLines& lines) {
  auto fail = [&](const std::string& section, const std::string& key, const std::string& msg) {
    throw ConfigError(section + "." + key + ": " + msg, lines.of(section, key));
  };
  try {
    c.env = canonical_env_name(c.env);
  } catch (const Error& e) {
    fail("run", "env", e.what());
  }
  if (c.algo != "ppo" && c.algo != "sac" && c.algo != "iql") fail("run", "algo", "unknown algorithm '" + c.algo + "' (expected ppo, sac or iql)");
  const bool discrete = make_env(c.env)->spec().action.discrete;
  if (c.algo == "ppo" && !discrete) fail("run", "algo", "ppo needs a discrete action space; " + c.env + " is continuous");
  if (c.algo != "ppo" && discrete) fail("run", "algo", c.algo + " needs a continuous action space; " + c.env + " is discrete");
  if (c.seeds.empty()) fail("run", "seeds", "at least one seed is required");
  if (c.span.nmodes < 1) fail("span", "nmodes", "must be >= 1");
  if (c.span.nelems < 1) fail("span", "nelems", "must be >= 1");
  if (c.span.degree < 1 || c.span.degree > 16) fail("span", "degree", "must lie in [1, 16]");
  if (!(c.span.head_init_scale > 0.0)) fail("span", "head_init_scale", "must be positive");
  for (std::size_t h : {c.mlp.actor_hidden1, c.mlp.actor_hidden2, c.mlp.critic_hidden1, c.mlp.critic_hidden2,
                        c.mlp.value_hidden1, c.mlp.value_hidden2}) {
    if (h < 1) fail("mlp", "actor_hidden1", "hidden sizes must be >= 1");
  }
  for (auto m : c.sweep.nmodes) if (m < 1) fail("sweep", "nmodes", "values must be >= 1");
  for (auto n : c.sweep.nelems) if (n < 1) fail("sweep", "nelems", "values must be >= 1");
  for (auto k : c.sweep.degree) if (k < 1 || k > 16) fail("sweep", "degree", "values must lie in [1, 16]");

  c.ppo.total_steps = c.total_steps;
  c.sac.total_steps = c.total_steps;
  c.iql.iterations = c.total_steps;
  const std::string algo_section = c.algo;
  try {
    if (c.algo == "ppo") c.ppo.validate();
    if (c.algo == "sac") c.sac.validate();
    if (c.algo == "iql") c.iql.validate();
  } catch (const UsageError& e) {
    throw ConfigError(e.what(), lines.of(algo_section, ""));
  }
}

}  // namespace

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  for (const auto& item : split(text, ',')) {
    if (item.empty()) throw UsageError("empty entry in seed list '" + text + "'");
    const auto dash = item.find('-');
    if (dash == std::string::npos) {
      out.push_back(parse_integer<std::uint64_t>(item));
      continue;
    }
    const auto lo = parse_integer<std::uint64_t>(trim(item.substr(0, dash)));
    const auto hi = parse_integer<std::uint64_t>(trim(item.substr(dash + 1)));
    if (hi < lo || hi - lo > 100'000) throw UsageError("bad seed range '" + item + "'");
    for (std::uint64_t s = lo; s <= hi; ++s) out.push_back(s);
  }
  return out;
}

NetSpec RunConfig::actor_spec() const {
  NetSpec s;
  s.kind = net;
  s.nmodes = span.nmodes;
  s.nelems = span.nelems;
  s.degree = span.degree;
  s.hidden1 = mlp.actor_hidden1;
  s.hidden2 = mlp.actor_hidden2;
  s.activation = mlp.activation;
  s.output_init_scale = net == NetKind::kSpan ? span.head_init_scale : mlp.actor_output_scale;
  return s;
}

NetSpec RunConfig::critic_spec() const {
  NetSpec s = actor_spec();
  s.hidden1 = mlp.critic_hidden1;
  s.hidden2 = mlp.critic_hidden2;
  s.output_init_scale = net == NetKind::kSpan ? span.head_init_scale : 1.0;
  return s;
}

NetSpec RunConfig::value_spec() const {
  NetSpec s = critic_spec();
  s.hidden1 = mlp.value_hidden1;
  s.hidden2 = mlp.value_hidden2;
  return s;
}

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  SourceLines lines;
  std::set<std::string> seen;
  std::map<std::string, const Field*> by_name;
  std::set<std::string> known_sections;
  for (const auto& f : fields()) {
    by_name[f.section + "." + f.key] = &f;
    known_sections.insert(f.section);
  }

  std::istringstream is(text);
  std::string raw, section;
  int line_no = 0;
  while (std::getline(is, raw)) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("unterminated section header", line_no);
      section = trim(line.substr(1, line.size() - 2));
      if (!known_sections.count(section)) throw ConfigError("unknown section [" + section + "]", line_no);
      lines.sections.emplace(section, line_no);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("expected 'key = value'", line_no);
    if (section.empty()) throw ConfigError("key outside of any section", line_no);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const std::string name = section + "." + key;
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw ConfigError("unknown key '" + key + "' in [" + section + "]", line_no);
    if (!seen.insert(name).second) throw ConfigError("duplicate key '" + name + "'", line_no);
    try {
      it->second->set(cfg, value);
    } catch (const Error& e) {
      throw ConfigError(name + ": " + e.what(), line_no);
    }
    lines.keys[name] = line_no;
  }

  const bool ppo = cfg.algo == "ppo";
  if (!seen.count("mlp.activation")) cfg.mlp.activation = ppo ? Activation::kTanh : Activation::kRelu;
  if (!seen.count("mlp.actor_output_scale")) cfg.mlp.actor_output_scale = ppo ? 0.01 : 1.0;
  validate(cfg, lines);
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file '" + path.string() + "'", 0);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const RunConfig& cfg) {
  std::string out, section;
  for (const auto& f : fields()) {
    if (f.section != section) {
      out += (section.empty() ? "[" : "\n[") + f.section + "]\n";
      section = f.section;
    }
    out += f.key + " = " + f.get(cfg) + "\n";
  }
  return out;
}

std::string config_fingerprint(const RunConfig& cfg) {
  RunConfig c = cfg;
  c.seeds.clear();
  c.out.clear();
  const std::string text = serialize_config(c);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace span_rl
