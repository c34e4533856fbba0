#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "corl/bench/checkpoint.hpp"
#include "corl/bench/config.hpp"
#include "corl/metrics/metrics.hpp"

namespace corl::bench {

struct RunInputs {
  std::vector<env::TaskSpec> tasks;
  std::vector<data::OfflineDataset> datasets;
};

// Task parameters and datasets for one seed, from its "tasks" and "data" substreams.
RunInputs make_inputs(const ExperimentConfig& cfg, std::uint64_t seed);

struct RunOptions {
  std::filesystem::path checkpoint_dir;  // empty: no checkpoints
  bool resume = false;
  int stop_after = -1;  // stop once this many tasks are learned (negative: run all)
  std::filesystem::path buffer_dir;  // empty: buffers are not written
  std::function<void(const std::string&)> log;
};

// Canonical JSON of everything that influences a run's numbers.
std::string run_fingerprint(const ExperimentConfig& cfg);

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, std::uint64_t seed);

metrics::SeedRun run_seed(const ExperimentConfig& cfg, std::uint64_t seed, const RunOptions& opts = {});

// Runs every seed (in parallel up to worker_count()), then writes raw.csv,
// summary.json and config.json into `out`.
metrics::Summary run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out,
                                const RunOptions& opts = {});

// One run_experiment per grid point, each in its own subdirectory
// ("lambda_r=0.3", "capacity=1000_lambda_r=1", ...).
std::vector<std::pair<std::string, metrics::Summary>> run_sweep(const ExperimentConfig& cfg,
                                                                const std::filesystem::path& out,
                                                                const RunOptions& opts = {});

// Writes <out>/seed-<s>/task-<n>.bin plus sidecars.
void generate_data(const ExperimentConfig& cfg, const std::filesystem::path& out);

// Re-aggregates <dir>/raw.csv into <dir>/summary.json.
metrics::Summary report(const std::filesystem::path& dir, const std::string& method, const std::string& selector);

// Provenance listing of a stored replay buffer, one "index episode step" row per transition.
std::string inspect_buffer(const std::filesystem::path& path);

// CORL_BENCH_THREADS if set and positive, else the hardware concurrency.
int worker_count();

// Runs fn(i) for i in [0, n) on up to `workers` threads; rethrows the first failure.
void parallel_for(int n, int workers, const std::function<void(int)>& fn);

int cli_main(int argc, char** argv);

}  // namespace corl::bench
