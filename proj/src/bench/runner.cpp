#include "corl/bench/runner.hpp"

#include <atomic>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "corl/data/dataset_io.hpp"

namespace corl::bench {

RunInputs make_inputs(const ExperimentConfig& cfg, std::uint64_t seed) {
  RunInputs in;
  in.tasks = env::sample_tasks(cfg.family, cfg.n_tasks, derive_seed(seed, "tasks"));
  for (int n = 1; n <= cfg.n_tasks; ++n) {
    in.datasets.push_back(data::generate_dataset(in.tasks[static_cast<std::size_t>(n - 1)], cfg.quality,
                                                 cfg.episodes_per_task,
                                                 derive_seed(seed, "data", static_cast<std::uint64_t>(n)),
                                                 cfg.behavior));
  }
  return in;
}

std::string run_fingerprint(const ExperimentConfig& cfg) {
  auto j = cfg.to_json();
  j.erase("seeds");
  j.erase("out_dir");
  j.erase("sweep");
  return j.dump();
}

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, std::uint64_t seed) {
  return dir / ("seed-" + std::to_string(seed) + ".ckpt");
}

metrics::SeedRun run_seed(const ExperimentConfig& cfg, std::uint64_t seed, const RunOptions& opts) {
  const RunInputs in = make_inputs(cfg, seed);
  const std::string fingerprint = run_fingerprint(cfg);
  auto log = [&](const std::string& msg) {
    if (opts.log) opts.log("seed " + std::to_string(seed) + ": " + msg);
  };

  std::optional<continual::SequenceRunner> runner;
  if (opts.resume && !opts.checkpoint_dir.empty() &&
      std::filesystem::exists(checkpoint_path(opts.checkpoint_dir, seed))) {
    RunCheckpoint ck = read_checkpoint(checkpoint_path(opts.checkpoint_dir, seed));
    if (ck.seed != seed) throw CheckpointError("checkpoint belongs to seed " + std::to_string(ck.seed));
    if (ck.config != fingerprint) throw CheckpointError("checkpoint was written under a different configuration");
    log("resuming after task " + std::to_string(ck.state.tasks_done));
    runner.emplace(in.tasks, in.datasets, cfg.sequence, seed, std::move(ck.state));
  } else {
    runner.emplace(in.tasks, in.datasets, cfg.sequence, seed);
  }

  while (!runner->done() && (opts.stop_after < 0 || runner->state().tasks_done < opts.stop_after)) {
    runner->run_next_task();
    const auto& st = runner->state();
    const int n = st.tasks_done;
    std::ostringstream row;
    for (int j = 1; j <= n; ++j) row << (j > 1 ? " " : "") << metrics::format_number(st.results.at(n, j));
    log("task " + std::to_string(n) + "/" + std::to_string(runner->task_count()) + " returns [" + row.str() + "]");
    if (!opts.checkpoint_dir.empty()) {
      std::filesystem::create_directories(opts.checkpoint_dir);
      write_checkpoint({seed, fingerprint, st}, checkpoint_path(opts.checkpoint_dir, seed));
    }
    if (!opts.buffer_dir.empty() && !st.buffers.empty()) {
      const auto dir = opts.buffer_dir / ("seed-" + std::to_string(seed));
      std::filesystem::create_directories(dir);
      select::write_buffer(st.buffers.back(), dir / ("task-" + std::to_string(n) + ".buf"));
    }
  }
  return {seed, runner->state().results};
}

int worker_count() {
  if (const char* env = std::getenv("CORL_BENCH_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
  workers = std::max(1, std::min(workers, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

metrics::Summary run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out,
                                const RunOptions& opts) {
  cfg.validate();
  std::filesystem::create_directories(out);
  std::vector<metrics::SeedRun> runs(cfg.seeds.size());
  parallel_for(static_cast<int>(cfg.seeds.size()), worker_count(), [&](int i) {
    runs[static_cast<std::size_t>(i)] = run_seed(cfg, cfg.seeds[static_cast<std::size_t>(i)], opts);
  });
  save_config(cfg, out / "config.json");
  return metrics::emit_report(runs, continual::to_string(cfg.sequence.method),
                              select::to_string(cfg.sequence.selector), out);
}

namespace {

std::string value_tag(const nlohmann::json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

}  // namespace

std::vector<std::pair<std::string, metrics::Summary>> run_sweep(const ExperimentConfig& cfg,
                                                                const std::filesystem::path& out,
                                                                const RunOptions& opts) {
  if (cfg.sweep.empty()) throw ConfigError("sweep", "no sweep grid in the configuration");
  std::vector<std::pair<std::string, nlohmann::json>> points{{"", cfg.to_json()}};
  for (const auto& [key, values] : cfg.sweep) {
    std::vector<std::pair<std::string, nlohmann::json>> next;
    for (const auto& [name, base] : points) {
      for (const auto& v : values) {
        auto j = base;
        j[key] = v;
        next.emplace_back(name + (name.empty() ? "" : "_") + key + "=" + value_tag(v), j);
      }
    }
    points = std::move(next);
  }
  std::vector<std::pair<std::string, metrics::Summary>> results;
  for (auto& [name, j] : points) {
    j.erase("sweep");
    const ExperimentConfig point = config_from_json(j);
    RunOptions o = opts;
    if (!o.checkpoint_dir.empty()) o.checkpoint_dir /= name;
    if (!o.buffer_dir.empty()) o.buffer_dir /= name;
    if (opts.log) opts.log("sweep point " + name);
    results.emplace_back(name, run_experiment(point, out / name, o));
  }
  return results;
}

void generate_data(const ExperimentConfig& cfg, const std::filesystem::path& out) {
  cfg.validate();
  for (auto seed : cfg.seeds) {
    const RunInputs in = make_inputs(cfg, seed);
    const auto dir = out / ("seed-" + std::to_string(seed));
    std::filesystem::create_directories(dir);
    for (std::size_t n = 0; n < in.datasets.size(); ++n) {
      data::write_dataset(in.datasets[n], dir / ("task-" + std::to_string(n + 1) + ".bin"));
    }
  }
}

metrics::Summary report(const std::filesystem::path& dir, const std::string& method, const std::string& selector) {
  const auto runs = metrics::read_raw_csv(dir / "raw.csv");
  if (runs.empty()) throw std::runtime_error((dir / "raw.csv").string() + " holds no rows");
  auto s = metrics::summarize(runs, method, selector);
  metrics::write_summary_json(s, dir / "summary.json");
  return s;
}

std::string inspect_buffer(const std::filesystem::path& path) {
  const auto buf = select::read_buffer(path);
  std::ostringstream os;
  os << "# selector=" << select::to_string(buf.selector) << " capacity=" << buf.capacity
     << " source_task=" << buf.source_task << " size=" << buf.size() << '\n';
  os << "index episode step\n";
  for (std::size_t i = 0; i < buf.provenance.size(); ++i) {
    os << i << ' ' << buf.provenance[i].episode << ' ' << buf.provenance[i].step << '\n';
  }
  return os.str();
}

}  // namespace corl::bench
