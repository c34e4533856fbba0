// Acceptance suite: one PASS/FAIL line per criterion. Exit status is non-zero
// if any selected criterion fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>

#include "CLI11.hpp"

#include "corl/bench/runner.hpp"
#include "corl/continual/projection.hpp"
#include "corl/data/dataset_io.hpp"
#include "corl/metrics/metrics.hpp"
#include "oracles.hpp"

using namespace corl;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

std::string list(const std::vector<double>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + fmt(v[i]);
  return s + "]";
}

// ---------------------------------------------------------------- 1

Outcome gradients() {
  const auto t0 = Clock::now();
  Rng rng(2024);
  std::uniform_int_distribution<int> width(1, 6), depth(0, 2), in_dim(1, 5), out_dim(1, 3);
  std::bernoulli_distribution coin(0.5);
  double worst = 0.0;
  for (int k = 0; k < 20; ++k) {
    std::vector<int> dims{in_dim(rng)};
    for (int l = depth(rng); l >= 0; --l) dims.push_back(width(rng));
    dims.push_back(out_dim(rng));
    const auto hidden = coin(rng) ? nn::Activation::Relu : nn::Activation::Identity;
    const auto output = coin(rng) ? nn::Activation::TanhScaled : nn::Activation::Identity;
    const auto net = nn::BasicMlp<double>::random(dims, hidden, output, 1.5, rng);
    const oracle::MatD x = oracle::MatD::Random(dims.front(), 4);
    const oracle::MatD y = oracle::MatD::Random(dims.back(), 4);
    const nn::LossFn<double> loss = [&](const nn::Mat<double>& out) { return nn::mse_loss<double>(out, y); };
    const auto analytic = nn::compute_gradients<double>(net, x, loss).grads.flatten();
    const auto numeric = oracle::fd_gradient(net, [&](const nn::BasicMlp<double>& n) {
      return (oracle::forward(n, x) - y).squaredNorm() / (2.0 * 4.0);
    });
    worst = std::max(worst, oracle::max_relative_error(analytic, numeric));
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && secs < 10.0, "max relative error " + fmt(worst) + ", " + fmt(secs, 3) + " s"};
}

// ---------------------------------------------------------------- 2

Outcome metrics_exact() {
  metrics::ResultMatrix m(3);
  m.set(1, 1, 10);
  m.set(2, 1, 11);
  m.set(2, 2, 12);
  m.set(3, 1, 6);
  m.set(3, 2, 9);
  m.set(3, 3, 15);
  const double per = metrics::compute_per(m), bwt = metrics::compute_bwt(m);
  const bool ok = std::abs(per - 10.0) <= 1e-12 && std::abs(bwt - 3.5) <= 1e-12;
  return {ok, "PER " + fmt(per, 17) + ", BWT " + fmt(bwt, 17)};
}

// ---------------------------------------------------------------- 3

Outcome projections() {
  Rng rng(7);
  std::uniform_int_distribution<int> dim_d(1, 50), mem_d(1, 4);
  std::normal_distribution<double> g(0.0, 1.0);
  auto vec = [&](int d) {
    Eigen::VectorXd v(d);
    for (int i = 0; i < d; ++i) v(i) = g(rng);
    return v;
  };
  double worst_dot = 0.0, worst_gap = 0.0;
  for (int it = 0; it < 1000; ++it) {
    const int d = dim_d(rng), k = mem_d(rng);
    const Eigen::VectorXd grad = vec(d);
    std::vector<Eigen::VectorXd> mem;
    for (int j = 0; j < k; ++j) mem.push_back(vec(d));
    const auto agem = continual::project_agem(grad, mem[0]);
    worst_dot = std::min(worst_dot, agem.dot(mem[0]));
    const auto gem = continual::project_gem(grad, mem);
    for (const auto& m : mem) worst_dot = std::min(worst_dot, gem.dot(m));
    const auto gem1 = continual::project_gem(grad, {mem[0]});
    worst_gap = std::max(worst_gap, (gem1 - agem).cwiseAbs().maxCoeff());
  }
  return {worst_dot >= -1e-9 && worst_gap <= 1e-12,
          "min constraint dot " + fmt(worst_dot) + ", max |GEM1 - AGEM| " + fmt(worst_gap)};
}

// ---------------------------------------------------------------- 4

// s' = s + a(0) on every coordinate, zero disagreement.
class ShiftModel : public model::TransitionModel {
 public:
  model::Prediction predict(const nn::VecR& s, const nn::VecR& a) const override {
    return {(s.array() + a(0)).matrix().cast<double>(), Eigen::VectorXd::Zero(s.size())};
  }
};

data::OfflineDataset random_dataset(int episodes, int len, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<float> n(0.0f, 1.0f);
  data::OfflineDataset ds;
  ds.state_dim = 2;
  ds.action_dim = 1;
  for (int e = 0; e < episodes; ++e) {
    data::Episode ep;
    for (int t = 0; t < len; ++t) {
      data::Transition tr{{n(rng), n(rng)}, {n(rng)}, n(rng), {n(rng), n(rng)}, t + 1 == len ? 1.0f : 0.0f};
      ep.transitions.push_back(tr);
    }
    ds.episodes.push_back(ep);
  }
  return ds;
}

Outcome selection() {
  const auto t0 = Clock::now();
  int mismatches = 0, cases = 0;
  auto expect = [&](bool ok) {
    ++cases;
    if (!ok) ++mismatches;
  };

  // MBES toy chain.
  {
    auto ds = oracle::chain_dataset({{{0}, {1}, {2}, {3}}});
    for (auto& t : ds.episodes[0].transitions) t.a = {1.0f};
    const ShiftModel model;
    select::SelectorContext ctx;
    ctx.policy = [](const nn::MatR& s) { return nn::MatR::Ones(1, s.cols()); };
    ctx.model = &model;
    const select::StateSampler origin = [](Rng&) { return nn::VecR::Zero(1); };
    const auto buf = select::mbes_fill_buffer(ds, ctx, 3, origin, {}, 0);
    expect(buf.provenance == oracle::mbes_walk(ds, ctx.policy, model, 3, origin, 0));
    expect(buf.provenance == std::vector<data::TransitionRef>{{0, 0}, {0, 1}, {0, 2}});
  }

  const select::StateSampler gauss = [](Rng& r) {
    std::normal_distribution<float> n(0.0f, 1.0f);
    nn::VecR s(2);
    s << n(r), n(r);
    return s;
  };
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto ds = random_dataset(8, 25, seed);  // 200 transitions
    const auto pts = oracle::state_matrix(ds);
    const auto refs = oracle::flat_refs(ds);
    const ShiftModel model;
    select::SelectorContext ctx;
    ctx.policy = [](const nn::MatR& s) { return nn::MatR(s.row(1) * 0.3f); };
    ctx.model = &model;

    // MBES walk on random data.
    for (int cap : {50, 200}) {
      const auto buf = select::mbes_fill_buffer(ds, ctx, cap, gauss, {}, seed);
      expect(buf.provenance == oracle::mbes_walk(ds, ctx.policy, model, cap, gauss, seed));
    }

    // nearest_state.
    Rng qr(seed + 100);
    for (int q = 0; q < 50; ++q) {
      const nn::VecR query = gauss(qr);
      const auto got = select::nearest_state(ds, query, select::DistanceMetric::StateL2, ctx);
      expect(got == refs[static_cast<std::size_t>(oracle::brute_nearest(pts, query.cast<double>()))]);
    }

    // Coverage.
    select::BaselineConfig bcfg;
    bcfg.coverage_radius = 0.5;
    const auto cov = select::baseline_select(ds, select::Selector::Coverage, 40, ctx, bcfg, seed);
    std::vector<data::TransitionRef> cov_expect;
    for (auto i : oracle::coverage(pts, 0.5, 40)) cov_expect.push_back(refs[i]);
    expect(cov.provenance == cov_expect);

    // Reward and Match: whole episodes in brute-force rank order.
    for (auto sel : {select::Selector::Reward, select::Selector::Match}) {
      std::vector<double> score;
      for (const auto& ep : ds.episodes) {
        double acc = 0.0;
        for (const auto& t : ep.transitions) {
          acc += sel == select::Selector::Reward ? double(t.r) : std::pow(double(t.a[0]) - 0.3 * double(t.s[1]), 2);
        }
        score.push_back(acc / static_cast<double>(ep.transitions.size()));
      }
      std::vector<int> order(score.size());
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return sel == select::Selector::Reward ? score[a] > score[b] : score[a] < score[b];
      });
      std::vector<data::TransitionRef> want;
      for (int e : order)
        for (int s = 0; s < 25 && want.size() < 60; ++s) want.push_back({e, s});
      expect(select::baseline_select(ds, sel, 60, ctx, {}, seed).provenance == want);
    }
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < 30.0, std::to_string(cases - mismatches) + "/" + std::to_string(cases) +
                                              " selections match their oracles, " + fmt(secs, 3) + " s"};
}

// ---------------------------------------------------------------- 5

Outcome backbone() {
  std::vector<double> margins, evals, means, secs(5);
  std::mutex mu;
  margins.resize(5);
  evals.resize(5);
  means.resize(5);
  bench::parallel_for(5, bench::worker_count(), [&](int i) {
    const auto seed = static_cast<std::uint64_t>(i);
    const auto t0 = Clock::now();
    const auto task = env::sample_tasks(env::Family::PmVel, 1, derive_seed(seed, "tasks")).front();
    const auto ds = data::generate_dataset(task, data::Quality::Medium, 200, derive_seed(seed, "data", 1));
    const auto trained = agent::train_offline(ds, 10000, agent::Td3BcConfig{}, seed);
    const double ret = env::evaluate_policy(task, trained.policy.action_map(), 10, derive_seed(seed, "eval", 1));
    const double mean = data::dataset_stats(ds).mean_return;
    std::lock_guard lock(mu);
    evals[i] = ret;
    means[i] = mean;
    margins[i] = ret - mean;
    secs[i] = seconds_since(t0);
  });
  const double med = oracle::median(margins);
  const double slowest = *std::max_element(secs.begin(), secs.end());
  return {med >= 0.0 && slowest < 600.0, "returns " + list(evals) + " vs dataset means " + list(means) +
                                             ", median margin " + fmt(med) + ", slowest seed " + fmt(slowest, 3) +
                                             " s"};
}

// ---------------------------------------------------------------- 6-8

struct Variant {
  std::string name;
  std::string selector;
  std::string method;
  double lambda_r = 1.0;
  int capacity = 1000;
};

struct VariantResult {
  std::vector<double> per, bwt;
  double seconds = 0.0;
};

bench::ExperimentConfig sequence_config(const Variant& v) {
  return bench::config_from_json({{"family", "PM-Dir"},
                                  {"quality", "M-R"},
                                  {"selector", v.selector},
                                  {"method", v.method},
                                  {"n_tasks", 3},
                                  {"steps", 10000},
                                  {"capacity", v.capacity},
                                  {"lambda_r", v.lambda_r},
                                  {"hidden_width", 64},
                                  {"seeds", {0, 1, 2, 3, 4}}});
}

class SequenceRuns {
 public:
  const VariantResult& get(const Variant& v) {
    auto it = cache_.find(v.name);
    if (it != cache_.end()) return it->second;
    const auto cfg = sequence_config(v);
    const auto t0 = Clock::now();
    std::vector<metrics::SeedRun> runs(cfg.seeds.size());
    bench::parallel_for(static_cast<int>(cfg.seeds.size()), bench::worker_count(),
                        [&](int i) { runs[i] = bench::run_seed(cfg, cfg.seeds[static_cast<std::size_t>(i)]); });
    VariantResult r;
    r.seconds = seconds_since(t0);
    const auto s = metrics::summarize(runs, v.method, v.selector);
    r.per = s.per;
    r.bwt = s.bwt;
    std::cout << "  [" << v.name << "] PER " << list(r.per) << " BWT " << list(r.bwt) << " (" << fmt(r.seconds, 4)
              << " s)" << std::endl;
    return cache_.emplace(v.name, std::move(r)).first->second;
  }

 private:
  std::map<std::string, VariantResult> cache_;
};

const Variant kNaive{"naive", "random", "none"};
const Variant kOer{"oer", "mbes", "dbc"};
const Variant kRandomBc{"random+bc", "random", "bc"};
const Variant kOerLow{"oer lambda 0.3", "mbes", "dbc", 0.3};
const Variant kOerHigh{"oer lambda 3", "mbes", "dbc", 3.0};
const Variant kOerBig{"oer capacity 10000", "mbes", "dbc", 1.0, 10000};

Outcome forgetting(SequenceRuns& runs) {
  const auto& naive = runs.get(kNaive);
  const auto& oer = runs.get(kOer);
  const auto& bc = runs.get(kRandomBc);
  const double naive_bwt = oracle::median(naive.bwt), oer_bwt = oracle::median(oer.bwt);
  const double oer_per = oracle::median(oer.per), bc_per = oracle::median(bc.per);
  const double secs = naive.seconds + oer.seconds + bc.seconds;
  const bool a = naive_bwt > 0.0, b = oer_bwt <= 0.5 * naive_bwt, c = oer_per >= bc_per;
  return {a && b && c && secs < 3600.0,
          std::string("(a) naive BWT ") + fmt(naive_bwt) + (a ? " ok" : " FAIL") + "; (b) OER BWT " + fmt(oer_bwt) +
              " vs bound " + fmt(0.5 * naive_bwt) + (b ? " ok" : " FAIL") + "; (c) OER PER " + fmt(oer_per) +
              " vs Random+BC " + fmt(bc_per) + (c ? " ok" : " FAIL") + "; " + fmt(secs, 4) + " s"};
}

Outcome lambda_monotone(SequenceRuns& runs) {
  const std::vector<double> med{oracle::median(runs.get(kOerLow).bwt), oracle::median(runs.get(kOer).bwt),
                                oracle::median(runs.get(kOerHigh).bwt)};
  bool ok = true;
  for (std::size_t i = 1; i < med.size(); ++i) ok = ok && med[i] <= med[i - 1] + 0.05 * std::abs(med[i - 1]);
  return {ok, "median BWT at lambda {0.3, 1, 3}: " + list(med)};
}

Outcome capacity_effect(SequenceRuns& runs) {
  const double small = oracle::median(runs.get(kOer).bwt), big = oracle::median(runs.get(kOerBig).bwt);
  return {big <= small, "median BWT capacity 10000: " + fmt(big) + ", capacity 1000: " + fmt(small)};
}

// ---------------------------------------------------------------- 9

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome persistence() {
  const auto root = fs::temp_directory_path() / "corl_acceptance_persistence";
  fs::remove_all(root);
  fs::create_directories(root);
  auto cfg = bench::config_from_json({{"family", "PM-Dir"},
                                      {"quality", "M-R"},
                                      {"selector", "mbes"},
                                      {"method", "dbc"},
                                      {"n_tasks", 3},
                                      {"episodes_per_task", 10},
                                      {"steps", 300},
                                      {"capacity", 200},
                                      {"eval_episodes", 2},
                                      {"hidden_width", 32},
                                      {"seeds", {0, 1}}});
  std::vector<std::string> notes;
  bool ok = true;
  auto check = [&](bool cond, const std::string& what) {
    notes.push_back(what + (cond ? " ok" : " FAIL"));
    ok = ok && cond;
  };

  bench::run_experiment(cfg, root / "a");
  bench::run_experiment(cfg, root / "b");
  check(slurp(root / "a" / "raw.csv") == slurp(root / "b" / "raw.csv") && !slurp(root / "a" / "raw.csv").empty(),
        "raw.csv identical");

  const auto inputs = bench::make_inputs(cfg, 0);
  data::write_dataset(inputs.datasets[0], root / "d.bin");
  check(data::read_dataset(root / "d.bin") == inputs.datasets[0], "dataset round trip");

  bench::RunOptions partial;
  partial.checkpoint_dir = root / "ck";
  partial.stop_after = 2;
  bench::run_seed(cfg, 1, partial);
  const auto ck = bench::read_checkpoint(bench::checkpoint_path(root / "ck", 1));
  bench::write_checkpoint(ck, root / "copy.ckpt");
  check(slurp(root / "copy.ckpt") == slurp(bench::checkpoint_path(root / "ck", 1)), "checkpoint round trip");

  bench::RunOptions resume;
  resume.checkpoint_dir = root / "ck";
  resume.resume = true;
  const auto resumed = bench::run_seed(cfg, 1, resume);
  const auto straight = bench::run_seed(cfg, 1);
  check(resumed.matrix == straight.matrix, "resume equals straight-through");

  fs::remove_all(root);
  std::string detail;
  for (const auto& n : notes) detail += (detail.empty() ? "" : "; ") + n;
  return {ok, detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::vector<int> only;
  app.add_option("--only", only, "run only these criteria (1-9)")->check(CLI::Range(1, 9));
  CLI11_PARSE(app, argc, argv);
  const std::set<int> selected(only.begin(), only.end());

  SequenceRuns runs;
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
      {1, gradients},
      {2, metrics_exact},
      {3, projections},
      {4, selection},
      {5, backbone},
      {6, [&] { return forgetting(runs); }},
      {7, [&] { return lambda_monotone(runs); }},
      {8, [&] { return capacity_effect(runs); }},
      {9, persistence},
  };

  int failed = 0;
  for (const auto& [id, fn] : criteria) {
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << " : " << o.detail << std::endl;
  }
  std::cout << (failed == 0 ? "all selected criteria passed" : std::to_string(failed) + " criteria failed")
            << std::endl;
  return failed == 0 ? 0 : 1;
}
