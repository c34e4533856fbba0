#include "doctest.h"

#include <stdexcept>

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "corl/bench/runner.hpp"
#include "corl/data/dataset_io.hpp"

using namespace corl;
using namespace corl::bench;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("corl_bench_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

nlohmann::json tiny_json() {
  return {{"family", "PM-Vel"}, {"quality", "M-R"}, {"selector", "random"}, {"method", "bc"},
          {"n_tasks", 2},       {"episodes_per_task", 4}, {"steps", 20},     {"capacity", 20},
          {"eval_episodes", 1}, {"hidden_width", 8},  {"batch_size", 16}};
}

ExperimentConfig tiny_config() { return config_from_json(tiny_json()); }

fs::path write_json(const fs::path& dir, const nlohmann::json& j) {
  const auto p = dir / "c.json";
  std::ofstream(p) << j.dump(2);
  return p;
}

struct CliResult {
  int code;
  std::string out, err;
};

CliResult cli(std::vector<std::string> args) {
  args.insert(args.begin(), "corl-bench");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  auto* old_out = std::cout.rdbuf(out.rdbuf());
  auto* old_err = std::cerr.rdbuf(err.rdbuf());
  const int code = cli_main(static_cast<int>(argv.size()), argv.data());
  std::cout.rdbuf(old_out);
  std::cerr.rdbuf(old_err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("minimal config gets the documented defaults") {
  const auto cfg = config_from_json(
      {{"family", "PM-Dir"}, {"quality", "M"}, {"selector", "mbes"}, {"method", "dbc"}});
  CHECK(cfg.sequence.lambda_r == 1.0);
  CHECK(cfg.sequence.capacity == 1000);
  CHECK(cfg.n_tasks == 5);
  CHECK(cfg.sequence.steps == 10000);
  CHECK(cfg.episodes_per_task == 200);
  CHECK(cfg.seeds == std::vector<std::uint64_t>{0});
  CHECK(cfg.sequence.td3.actor_lr == 3e-3);
  CHECK(cfg.sequence.td3.net.hidden_width == 128);
  CHECK(cfg.sequence.td3.net.hidden_layers == 2);
  CHECK(cfg.sequence.ensemble.members == 5);
  CHECK(cfg.sequence.replay_norm == continual::ReplayNorm::OverN);
}

TEST_CASE("config validation names the field") {
  auto reject = [](nlohmann::json j, const std::string& field) {
    try {
      config_from_json(j);
      FAIL("accepted: " << j.dump());
    } catch (const ConfigError& e) {
      CHECK(e.field() == field);
    }
  };
  auto j = tiny_json();
  j["lambda_r"] = -1;
  reject(j, "lambda_r");
  j = tiny_json();
  j["selector"] = "mbsx";
  reject(j, "selector");
  j = tiny_json();
  j["capcity"] = 10;
  reject(j, "capcity");
  j = tiny_json();
  j.erase("method");
  reject(j, "method");
  j = tiny_json();
  j["steps"] = "many";
  reject(j, "steps");
  j = tiny_json();
  j["replay_norm"] = "1/(n-1)";
  CHECK(config_from_json(j).sequence.replay_norm == continual::ReplayNorm::OverNMinus1);
  j["sweep"] = {{"alpha", {1, 2}}};
  reject(j, "sweep.alpha");
}

TEST_CASE("malformed and unknown-key files give distinct messages") {
  const auto dir = scratch("cfgmsg");
  std::ofstream(dir / "bad.json") << "{ not json";
  std::string m1, m2;
  try {
    load_config(dir / "bad.json");
  } catch (const ConfigError& e) {
    m1 = e.what();
  }
  auto j = tiny_json();
  j["bogus"] = 1;
  try {
    load_config(write_json(dir, j));
  } catch (const ConfigError& e) {
    m2 = e.what();
  }
  CHECK_FALSE(m1.empty());
  CHECK_FALSE(m2.empty());
  CHECK(m1 != m2);
  CHECK_THROWS_AS(load_config(dir / "missing.json"), ConfigError);
  fs::remove_all(dir);
}

TEST_CASE("config round trip") {
  auto j = tiny_json();
  j["lambda_r"] = 0.3;
  j["seeds"] = {3, 1, 4};
  j["uncertainty_mode"] = "absolute";
  j["uncertainty_absolute"] = 0.25;
  j["coverage_radius"] = 0.7;
  j["sweep"] = {{"capacity", {10, 20}}};
  const auto cfg = config_from_json(j);
  const auto dir = scratch("roundtrip");
  save_config(cfg, dir / "saved.json");
  CHECK(load_config(dir / "saved.json") == cfg);
  CHECK(config_from_json(cfg.to_json()) == cfg);
  fs::remove_all(dir);
}

TEST_CASE("seed lists") {
  CHECK(parse_seed_list("0,1,2") == std::vector<std::uint64_t>{0, 1, 2});
  CHECK(parse_seed_list("3-6") == std::vector<std::uint64_t>{3, 4, 5, 6});
  CHECK_THROWS(parse_seed_list("4-1"));
  CHECK_THROWS(parse_seed_list("a"));
}

TEST_CASE("checkpoint resume equals a straight-through run") {
  const auto cfg = tiny_config();
  auto three = cfg;
  three.n_tasks = 3;
  const auto dir = scratch("resume");
  const auto straight = run_seed(three, 5);

  RunOptions first;
  first.checkpoint_dir = dir;
  first.stop_after = 2;
  const auto partial = run_seed(three, 5, first);
  CHECK_FALSE(partial.matrix.has(3, 1));
  const auto path = checkpoint_path(dir, 5);
  REQUIRE(fs::exists(path));
  CHECK(slurp(path).substr(0, 8) == "CORLCKPT");

  const auto ck = read_checkpoint(path);
  CHECK(ck.seed == 5);
  CHECK(ck.state.tasks_done == 2);
  CHECK(ck.config == run_fingerprint(three));

  RunOptions resume;
  resume.checkpoint_dir = dir;
  resume.resume = true;
  const auto resumed = run_seed(three, 5, resume);
  CHECK(resumed.matrix == straight.matrix);

  // A checkpoint from a different configuration is refused.
  auto other = three;
  other.sequence.lambda_r = 2.0;
  CHECK_THROWS(run_seed(other, 5, resume));
  fs::remove_all(dir);
}

TEST_CASE("checkpoint file round trip and error handling") {
  const auto cfg = tiny_config();
  const auto in = make_inputs(cfg, 1);
  continual::SequenceRunner runner(in.tasks, in.datasets, cfg.sequence, 1);
  runner.run_next_task();
  RunCheckpoint ck{1, run_fingerprint(cfg), runner.state()};
  const auto dir = scratch("ckpt");
  const auto path = dir / "x.ckpt";
  write_checkpoint(ck, path);
  CHECK_FALSE(fs::exists(dir / "x.ckpt.tmp"));
  const auto back = read_checkpoint(path);
  CHECK(back.seed == 1);
  CHECK(back.config == ck.config);
  CHECK(back.state.policy == ck.state.policy);
  CHECK(back.state.results == ck.state.results);
  CHECK(back.state.buffers == ck.state.buffers);
  CHECK(back.state.regularizer == ck.state.regularizer);
  CHECK(back.state.policy.trunk_opt.t == ck.state.policy.trunk_opt.t);

  CHECK_THROWS_AS(read_checkpoint(dir / "missing.ckpt"), CheckpointError);

  std::string bytes = slurp(path);
  std::string bad = bytes;
  bad[8] = 99;  // version
  std::ofstream(dir / "ver.ckpt", std::ios::binary) << bad;
  CHECK_THROWS_WITH_AS(read_checkpoint(dir / "ver.ckpt"), doctest::Contains("version"), CheckpointError);
  bad = bytes;
  bad[0] = 'X';
  std::ofstream(dir / "magic.ckpt", std::ios::binary) << bad;
  CHECK_THROWS_AS(read_checkpoint(dir / "magic.ckpt"), CheckpointError);
  std::ofstream(dir / "short.ckpt", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
  CHECK_THROWS_AS(read_checkpoint(dir / "short.ckpt"), CheckpointError);
  std::ofstream(dir / "long.ckpt", std::ios::binary) << bytes << "x";
  CHECK_THROWS_AS(read_checkpoint(dir / "long.ckpt"), CheckpointError);
  fs::remove_all(dir);
}

TEST_CASE("network block round trip is bit exact") {
  Rng rng(3);
  const std::vector<int> d1{3, 5, 2};
  const std::vector<int> d2{4, 1};
  std::vector<nn::Mlp> nets{
      nn::Mlp::random(d1, nn::Activation::Relu, nn::Activation::TanhScaled, 0.5f, rng),
      nn::Mlp::random(d2, nn::Activation::Relu, nn::Activation::Identity, 1.0f, rng)};
  std::stringstream ss;
  write_networks(ss, nets);
  CHECK(ss.str().substr(0, 8) == "CORLNETS");
  const auto back = read_networks(ss);
  REQUIRE(back.size() == 2);
  CHECK(back[0] == nets[0]);
  CHECK(back[1] == nets[1]);
}

TEST_CASE("cli: run is byte-reproducible") {
  const auto dir = scratch("cli_run");
  const auto cfgp = write_json(dir, tiny_json());
  const auto a = cli({"run", "--config", cfgp.string(), "--seeds", "0", "--out", (dir / "a").string(), "-q"});
  const auto b = cli({"run", "--config", cfgp.string(), "--seeds", "0", "--out", (dir / "b").string(), "-q"});
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  CHECK(slurp(dir / "a" / "raw.csv") == slurp(dir / "b" / "raw.csv"));
  CHECK(fs::exists(dir / "a" / "summary.json"));
  CHECK(fs::exists(dir / "a" / "config.json"));
  CHECK(fs::exists(dir / "a" / "checkpoints" / "seed-0.ckpt"));
  CHECK(a.out.find("PER=") != std::string::npos);

  // report re-aggregates the CSV into the same summary
  const std::string before = slurp(dir / "a" / "summary.json");
  fs::remove(dir / "a" / "summary.json");
  const auto r = cli({"report", "--out", (dir / "a").string(), "--method", "bc", "--selector", "random"});
  CHECK(r.code == 0);
  CHECK(slurp(dir / "a" / "summary.json") == before);
  fs::remove_all(dir);
}

TEST_CASE("cli: config errors exit 2 naming the field, runtime errors exit 1") {
  const auto dir = scratch("cli_err");
  auto j = tiny_json();
  j["selector"] = "mbsx";
  const auto r = cli({"run", "--config", write_json(dir, j).string(), "--out", (dir / "o").string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("selector") != std::string::npos);
  CHECK(cli({"run"}).code == 2);
  CHECK(cli({"frobnicate"}).code == 2);
  CHECK(cli({"inspect-buffer", (dir / "nothing.bin").string()}).code == 1);
  fs::remove_all(dir);
}

TEST_CASE("cli: sweep writes one summary per grid value") {
  const auto dir = scratch("cli_sweep");
  auto j = tiny_json();
  j["sweep"] = {{"lambda_r", {0.3, 1, 3}}};
  const auto r = cli({"sweep", "--config", write_json(dir, j).string(), "--out", (dir / "o").string(), "-q",
                      "--no-checkpoint"});
  REQUIRE(r.code == 0);
  int summaries = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir / "o"))
    if (e.path().filename() == "summary.json") ++summaries;
  CHECK(summaries == 3);
  CHECK(fs::exists(dir / "o" / "lambda_r=0.3" / "summary.json"));
  fs::remove_all(dir);
}

TEST_CASE("cli: gen-data and buffers") {
  const auto dir = scratch("cli_data");
  const auto cfgp = write_json(dir, tiny_json());
  REQUIRE(cli({"gen-data", "--config", cfgp.string(), "--seeds", "0,1", "--out", (dir / "d").string()}).code == 0);
  const auto ds = data::read_dataset(dir / "d" / "seed-1" / "task-2.bin");
  CHECK(ds == make_inputs(tiny_config(), 1).datasets[1]);

  REQUIRE(cli({"run", "--config", cfgp.string(), "--out", (dir / "r").string(), "-q", "--save-buffers"}).code == 0);
  const auto buf = dir / "r" / "buffers" / "seed-0" / "task-1.buf";
  REQUIRE(fs::exists(buf));
  const auto listing = cli({"inspect-buffer", buf.string()});
  CHECK(listing.code == 0);
  CHECK(std::count(listing.out.begin(), listing.out.end(), '\n') >= 20);
  fs::remove_all(dir);
}

TEST_CASE("worker pool") {
  setenv("CORL_BENCH_THREADS", "3", 1);
  CHECK(worker_count() == 3);
  setenv("CORL_BENCH_THREADS", "0", 1);
  CHECK(worker_count() >= 1);
  unsetenv("CORL_BENCH_THREADS");

  std::atomic<int> sum{0};
  parallel_for(10, 4, [&](int i) { sum += i; });
  CHECK(sum == 45);
  CHECK_THROWS_AS(parallel_for(5, 2, [](int i) {
                    if (i == 3) throw std::runtime_error("boom");
                  }),
                  std::runtime_error);
}

TEST_CASE("experiment outputs are independent of worker count") {
  auto cfg = tiny_config();
  cfg.seeds = {0, 1, 2};
  const auto dir = scratch("workers");
  setenv("CORL_BENCH_THREADS", "1", 1);
  run_experiment(cfg, dir / "one");
  setenv("CORL_BENCH_THREADS", "3", 1);
  run_experiment(cfg, dir / "three");
  unsetenv("CORL_BENCH_THREADS");
  CHECK(slurp(dir / "one" / "raw.csv") == slurp(dir / "three" / "raw.csv"));
  fs::remove_all(dir);
}
