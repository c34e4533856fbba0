#include <iostream>

#include "CLI11.hpp"

#include "corl/bench/runner.hpp"

namespace corl::bench {

namespace {

ExperimentConfig configure(const std::string& path, const std::string& seeds, const std::string& out) {
  ExperimentConfig cfg = load_config(path);
  if (!seeds.empty()) cfg.seeds = parse_seed_list(seeds);
  if (!out.empty()) cfg.out_dir = out;
  cfg.validate();
  return cfg;
}

void print_summary(const metrics::Summary& s) {
  std::cout << "method=" << s.method << " selector=" << s.selector << " seeds=" << s.n_seeds
            << " PER=" << s.per_mean << " (std " << s.per_std << ")"
            << " BWT=" << s.bwt_mean << " (std " << s.bwt_std << ")\n";
}

}  // namespace

int cli_main(int argc, char** argv) {
  CLI::App app{"Continual offline RL benchmark on point-mass task sequences"};
  app.require_subcommand(1);

  std::string config, seeds, out, method, selector, buffer;
  bool resume = false, no_checkpoint = false, save_buffers = false, quiet = false;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* opt = sub->add_option("--config", config, "experiment configuration (JSON)");
    if (needs_config) opt->required();
    sub->add_option("--seeds", seeds, "seed list, e.g. 0,1,2 or 0-4");
    sub->add_option("--out", out, "output directory");
  };
  auto add_run_flags = [&](CLI::App* sub) {
    sub->add_flag("--resume", resume, "continue from per-seed checkpoints in <out>/checkpoints");
    sub->add_flag("--no-checkpoint", no_checkpoint, "do not write checkpoints");
    sub->add_flag("--save-buffers", save_buffers, "write replay buffers to <out>/buffers");
    sub->add_flag("-q,--quiet", quiet, "suppress progress output");
  };

  auto* gen = app.add_subcommand("gen-data", "generate offline datasets for every seed and task");
  add_common(gen, true);
  auto* run = app.add_subcommand("run", "learn the task sequence for every seed and write reports");
  add_common(run, true);
  add_run_flags(run);
  auto* sweep = app.add_subcommand("sweep", "run every point of the config's sweep grid");
  add_common(sweep, true);
  add_run_flags(sweep);
  auto* rep = app.add_subcommand("report", "re-aggregate <out>/raw.csv into summary.json");
  add_common(rep, false);
  rep->add_option("--method", method, "method tag for the summary");
  rep->add_option("--selector", selector, "selector tag for the summary");
  auto* insp = app.add_subcommand("inspect-buffer", "list the provenance of a stored replay buffer");
  insp->add_option("buffer", buffer, "buffer file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    RunOptions opts;
    if (!quiet) opts.log = [](const std::string& msg) { std::cerr << msg << std::endl; };

    if (gen->parsed()) {
      const auto cfg = configure(config, seeds, out);
      generate_data(cfg, cfg.out_dir);
      std::cout << "datasets written to " << cfg.out_dir << '\n';
    } else if (run->parsed() || sweep->parsed()) {
      const auto cfg = configure(config, seeds, out);
      const std::filesystem::path dir = cfg.out_dir;
      if (!no_checkpoint) opts.checkpoint_dir = dir / "checkpoints";
      if (save_buffers) opts.buffer_dir = dir / "buffers";
      opts.resume = resume;
      if (run->parsed()) {
        print_summary(run_experiment(cfg, dir, opts));
      } else {
        for (const auto& [name, s] : run_sweep(cfg, dir, opts)) {
          std::cout << name << ": ";
          print_summary(s);
        }
      }
    } else if (rep->parsed()) {
      std::filesystem::path dir = out;
      if (!config.empty()) {
        const auto cfg = configure(config, seeds, out);
        dir = cfg.out_dir;
        if (method.empty()) method = continual::to_string(cfg.sequence.method);
        if (selector.empty()) selector = select::to_string(cfg.sequence.selector);
      }
      if (dir.empty()) throw ConfigError("out", "report needs --out or --config");
      if ((method.empty() || selector.empty()) && std::filesystem::exists(dir / "summary.json")) {
        std::ifstream in(dir / "summary.json");
        const auto j = nlohmann::json::parse(in);
        if (method.empty()) method = j.at("method").get<std::string>();
        if (selector.empty()) selector = j.at("selector").get<std::string>();
      }
      if (method.empty() || selector.empty()) {
        throw ConfigError("method", "pass --method/--selector or --config when no summary.json exists");
      }
      print_summary(report(dir, method, selector));
    } else if (insp->parsed()) {
      std::cout << inspect_buffer(buffer);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace corl::bench
