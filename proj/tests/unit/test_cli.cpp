#include <doctest.h>

#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "span_rl/commands.hpp"
#include "span_rl/config.hpp"
#include "span_rl/errors.hpp"

using namespace span_rl;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("span_rl_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  fs::path write(const std::string& name, const std::string& text) const {
    std::ofstream(path / name) << text;
    return path / name;
  }
};

std::string read(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

const char* kTinyPpo = R"(
[run]
env = CartPole
algo = ppo
net = span
seeds = 0-1
total_steps = 1024
[span]
nmodes = 1
nelems = 2
degree = 1
[ppo]
rollout_batch = 512
eval_interval = 512
eval_episodes = 2
)";

}  // namespace

TEST_CASE("seed lists") {
  CHECK(parse_seed_list("0-4") == std::vector<std::uint64_t>{0, 1, 2, 3, 4});
  CHECK(parse_seed_list("3") == std::vector<std::uint64_t>{3});
  CHECK(parse_seed_list("0-2,7") == std::vector<std::uint64_t>{0, 1, 2, 7});
  CHECK(parse_seed_list("5, 1") == std::vector<std::uint64_t>{5, 1});
  CHECK_THROWS(parse_seed_list("4-2"));
  CHECK_THROWS(parse_seed_list("a"));
  CHECK_THROWS(parse_seed_list("1,,2"));
}

TEST_CASE("config round trip") {
  RunConfig c = parse_config(serialize_config(RunConfig{}));
  CHECK(parse_config(serialize_config(c)) == c);

  c = parse_config(kTinyPpo);
  CHECK(c.seeds == std::vector<std::uint64_t>{0, 1});
  CHECK(c.ppo.rollout_batch == 512);
  CHECK(c.ppo.total_steps == 1024);
  CHECK(c.mlp.activation == Activation::kTanh);
  CHECK(c.mlp.actor_output_scale == 0.01);
  CHECK(parse_config(serialize_config(c)) == c);

  RunConfig s = parse_config("[run]\nenv = Pendulum-v1\nalgo = sac\nnet = mlp\n[mlp]\nactor_hidden1 = 7\n[sac]\nbatch = 99\ntau = 0.25\n"
                             "[sweep]\nnmodes = 2,4\n[dataset]\ntag = random\nnoise = 0.3\n");
  CHECK(s.env == "Pendulum");
  CHECK(s.mlp.activation == Activation::kRelu);
  CHECK(s.mlp.actor_hidden1 == 7);
  CHECK(s.sac.tau == 0.25);
  CHECK(s.sweep.nmodes == std::vector<std::size_t>{2, 4});
  CHECK(s.dataset.noise == 0.3);
  CHECK(parse_config(serialize_config(s)) == s);
}

TEST_CASE("bundled configs parse") {
  const fs::path dir = fs::path(SPAN_RL_SOURCE_DIR) / "tools" / "configs";
  int n = 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    INFO(e.path());
    const RunConfig c = load_config(e.path());
    CHECK(parse_config(serialize_config(c)) == c);
    ++n;
  }
  CHECK(n >= 8);
  const auto cart = load_config(dir / "cartpole_span.ini");
  CHECK(cart.span.nmodes == 1);
  CHECK(cart.span.nelems == 2);
  CHECK(cart.span.degree == 1);
  CHECK(cart.seeds.size() == 5);
}

TEST_CASE("fingerprint") {
  RunConfig a = parse_config(kTinyPpo);
  RunConfig b = a;
  b.seeds = {9};
  b.out = "elsewhere";
  CHECK(config_fingerprint(a) == config_fingerprint(b));
  CHECK(config_fingerprint(a).size() == 16);
  b.span.nmodes = 2;
  CHECK(config_fingerprint(a) != config_fingerprint(b));
}

TEST_CASE("config errors carry line numbers") {
  auto line_of = [](const std::string& text) {
    try {
      parse_config(text);
    } catch (const ConfigError& e) {
      return e.line();
    }
    return -1;
  };
  CHECK(line_of("[run]\nenv = CartPole\nbogus = 1\n") == 3);
  CHECK(line_of("[run]\n\n[nope]\n") == 3);
  CHECK(line_of("[run]\nenv = HalfCheetah\n") == 2);
  CHECK(line_of("[run]\nalgo = sac\n") == 2);
  CHECK(line_of("[run]\nenv\n") == 2);
  CHECK(line_of("env = CartPole\n") == 1);
  CHECK(line_of("[run]\nenv = CartPole\nenv = Acrobot\n") == 3);
  CHECK(line_of("[span]\nnmodes = many\n") == 2);
  CHECK(line_of("[span]\nnmodes = 0\n") == 2);
  CHECK(line_of("[run]\nseeds = 1-\n") == 2);
  CHECK(line_of("[run]\nenv = CartPole\n# comment\n; other\n") == -1);
}

TEST_CASE("output directory precedence") {
  RunConfig c;
  CommandOptions o;
  ::unsetenv("SPAN_RL_OUT");
  CHECK(resolve_output_dir(c, o) == "runs");
  ::setenv("SPAN_RL_OUT", "/tmp/from_env", 1);
  CHECK(resolve_output_dir(c, o) == "/tmp/from_env");
  c.out = "from_config";
  CHECK(resolve_output_dir(c, o) == "from_config");
  o.out = "from_flag";
  CHECK(resolve_output_dir(c, o) == "from_flag");
  ::unsetenv("SPAN_RL_OUT");
}

TEST_CASE("train writes per-seed files deterministically") {
  TempDir t;
  const auto cfg = t.write("tiny.ini", kTinyPpo);
  std::ostringstream out, err;
  CommandOptions o;
  o.out = (t.path / "a").string();
  o.quiet = true;
  REQUIRE(cmd_train(cfg, o, out, err) == kExitOk);
  for (int k = 0; k < 2; ++k) {
    const std::string s = std::to_string(k);
    CHECK(fs::exists(t.path / "a" / ("curve_seed" + s + ".csv")));
    CHECK(fs::exists(t.path / "a" / ("summary_seed" + s + ".json")));
    CHECK(fs::exists(t.path / "a" / ("checkpoint_seed" + s + ".bin")));
  }
  const std::string fp = config_fingerprint(parse_config(kTinyPpo));
  CHECK(read(t.path / "a" / "curve_seed0.csv").find("fingerprint=" + fp) != std::string::npos);
  CHECK(read(t.path / "a" / "summary_seed1.json").find(fp) != std::string::npos);

  o.out = (t.path / "b").string();
  o.seeds = "1";
  o.parallel = 2;
  REQUIRE(cmd_train(cfg, o, out, err) == kExitOk);
  CHECK(read(t.path / "a" / "curve_seed1.csv") == read(t.path / "b" / "curve_seed1.csv"));
  CHECK_FALSE(fs::exists(t.path / "b" / "curve_seed0.csv"));

  std::ostringstream eval_out;
  EvaluateOptions eo;
  eo.episodes = 3;
  REQUIRE(cmd_evaluate(t.path / "a" / "checkpoint_seed0.bin", eo, eval_out, err) == kExitOk);
  const auto j = nlohmann::json::parse(eval_out.str());
  CHECK(j["env"] == "CartPole");
  CHECK(j["returns"].size() == 3);
  CHECK(j["fingerprint"] == fp);
  CHECK(cmd_evaluate(t.path / "missing.bin", eo, eval_out, err) == kExitUsage);
}

TEST_CASE("train rejects bad configs and arguments with exit 2") {
  TempDir t;
  std::ostringstream out, err;
  CommandOptions o;
  o.out = t.path.string();
  CHECK(cmd_train(t.write("env.ini", "[run]\nenv = Nowhere\n"), o, out, err) == kExitUsage);
  CHECK(err.str().find("line 2") != std::string::npos);
  CHECK(cmd_train(t.path / "missing.ini", o, out, err) == kExitUsage);
  o.seeds = "x";
  CHECK(cmd_train(t.write("ok.ini", kTinyPpo), o, out, err) == kExitUsage);
  o.seeds.reset();
  o.parallel = 0;
  CHECK(cmd_train(t.write("ok2.ini", kTinyPpo), o, out, err) == kExitUsage);
}

TEST_CASE("sweep emits one row per variant and seed") {
  TempDir t;
  std::ostringstream out, err;
  CommandOptions o;
  o.out = (t.path / "s").string();
  o.quiet = true;
  const auto cfg = t.write("sweep.ini", std::string(kTinyPpo) + "[sweep]\nnmodes = 1,2\ndegree = 2\n");
  REQUIRE(cmd_sweep(cfg, o, out, err) == kExitOk);
  std::istringstream csv(read(t.path / "s" / "sweep.csv"));
  std::string line;
  std::getline(csv, line);
  CHECK(line.rfind("# span_rl.sweep v1 fingerprint=", 0) == 0);
  std::getline(csv, line);
  CHECK(line == "axis,value,seed,final_return");
  int rows = 0;
  while (std::getline(csv, line)) ++rows;
  CHECK(rows == 3 * 2);
  CHECK(fs::exists(t.path / "s" / "nmodes_2" / "summary_seed1.json"));

  o.out = (t.path / "base").string();
  REQUIRE(cmd_sweep(t.write("plain.ini", kTinyPpo), o, out, err) == kExitOk);
  std::istringstream base(read(t.path / "base" / "sweep.csv"));
  rows = 0;
  while (std::getline(base, line)) ++rows;
  CHECK(rows == 2 + 2);
}

namespace {

void write_summary(const fs::path& dir, const std::string& env, int seed, double solve_level,
                   const std::string& fingerprint = "f00d") {
  RunSummary s;
  s.env = env;
  s.algo = "ppo";
  s.net = "span";
  s.seed = static_cast<std::uint64_t>(seed);
  s.fingerprint = fingerprint;
  s.total_steps = 100000;
  const double target = env == "CartPole" ? 500.0 : -100.0;
  for (int i = 1; i <= 20; ++i) {
    const double v = i * 5000 >= solve_level ? target : (env == "CartPole" ? 10.0 : -500.0);
    s.curve.push_back(make_eval_record(static_cast<std::uint64_t>(i) * 5000, {v}));
  }
  finalize_summary(s, target);
  fs::create_directories(dir);
  std::ofstream(dir / ("summary_seed" + std::to_string(seed) + ".json")) << to_json(s).dump();
}

}  // namespace

TEST_CASE("report layout") {
  TempDir t;
  for (int k = 0; k < 20; ++k) write_summary(t.path / "cart", "CartPole", k, k < 19 ? 50000 : 1e9);
  std::ostringstream out, err;
  REQUIRE(cmd_report(t.path, out, err) == kExitOk);
  const std::string text = out.str();
  CHECK(text.find("== CartPole ==") != std::string::npos);
  const auto row = text.find("\nppo/span");
  REQUIRE(row != std::string::npos);
  std::istringstream line(text.substr(row + 1, text.find('\n', row + 1) - row - 1));
  std::vector<std::string> cells;
  std::string method, a, b;
  line >> method;
  while (line >> a >> b) cells.push_back(a + " " + b);
  CHECK(cells.size() == 5);
  CHECK(cells.front() == "50k (95%)");
  CHECK(fs::exists(t.path / "report.txt"));
  CHECK(fs::exists(t.path / "efficiency.csv"));
  CHECK(fs::exists(t.path / "anytime.csv"));
  CHECK(text.find("100%") != std::string::npos);

  write_summary(t.path / "acro", "Acrobot", 0, 20000);
  std::ostringstream out2;
  REQUIRE(cmd_report(t.path, out2, err) == kExitOk);
  CHECK(out2.str().find("== Acrobot ==") != std::string::npos);
  CHECK(out2.str().find("50% [-200]") != std::string::npos);

  write_summary(t.path / "other", "CartPole", 30, 1000, "beef");
  std::ostringstream out3, err3;
  CHECK(cmd_report(t.path, out3, err3) == kExitUsage);
  CHECK(err3.str().find("fingerprint") != std::string::npos);

  TempDir empty;
  CHECK(cmd_report(empty.path, out3, err3) == kExitUsage);
  CHECK(cmd_report(empty.path / "nope", out3, err3) == kExitUsage);
}

TEST_CASE("efficiency cells") {
  AggregateResult r;
  r.median_step = 201000;
  r.success_rate = 0.95;
  CHECK(format_efficiency_cell(r) == "201k (95%)");
  r.median_step.reset();
  r.success_rate = 0.0;
  CHECK(format_efficiency_cell(r) == "--- (0%)");
}

TEST_CASE("dataset command") {
  TempDir t;
  std::ostringstream out, err;
  CommandOptions o;
  o.out = t.path.string();
  const std::string base = "[run]\nenv = Pendulum\nalgo = iql\n[dataset]\n";
  CHECK(cmd_dataset(t.write("e.ini", base + "tag = expert\nsize = 100\n"), o, out, err) == kExitUsage);
  CHECK(cmd_dataset(t.write("z.ini", base + "tag = random\nsize = 0\n"), o, out, err) == kExitUsage);
  CHECK(cmd_dataset(t.write("m.ini", base + "tag = expert\nsize = 100\ncheckpoint = " + (t.path / "none.bin").string() + "\n"),
                    o, out, err) == kExitUsage);
  const auto file = t.path / "r.bin";
  REQUIRE(cmd_dataset(t.write("r.ini", base + "tag = random\nsize = 777\nanchor_episodes = 2\nfile = " + file.string() + "\n"),
                      o, out, err) == kExitOk);
  const auto ds = OfflineDataset::load(file);
  CHECK(ds.size() == 777);
  CHECK(ds.header()["size"] == 777);
  const auto meta = nlohmann::json::parse(read(file.string() + ".json"));
  CHECK(meta["size"] == 777);
  CHECK(meta.contains("fingerprint"));
}
