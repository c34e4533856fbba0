#include "corl/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace corl::data {

Quality parse_quality(std::string_view tag) {
  if (tag == "M") return Quality::Medium;
  if (tag == "M-R") return Quality::MediumRandom;
  throw std::invalid_argument("unknown dataset quality '" + std::string(tag) + "'");
}

std::string to_string(Quality q) { return q == Quality::Medium ? "M" : "M-R"; }

Behavior parse_behavior(std::string_view tag) {
  if (tag == "medium") return Behavior::Medium;
  if (tag == "random") return Behavior::Random;
  throw std::invalid_argument("unknown behavior quality '" + std::string(tag) + "'");
}

std::string to_string(Behavior b) { return b == Behavior::Medium ? "medium" : "random"; }

std::size_t OfflineDataset::transition_count() const {
  std::size_t n = 0;
  for (const auto& e : episodes) n += e.transitions.size();
  return n;
}

std::vector<double> behavior_action(const env::TaskSpec& task, const env::EnvState& state, Behavior kind,
                                    Rng& rng, const BehaviorParams& params) {
  const int d = task.action_dim();
  const double bound = task.action_bound;
  std::vector<double> a(d);
  if (kind == Behavior::Random) {
    std::uniform_real_distribution<double> u(-bound, bound);
    for (auto& x : a) x = u(rng);
    return a;
  }
  std::array<double, 2> target{};
  if (task.family == env::Family::PmDir) {
    target = {task.v_max * std::cos(task.param), task.v_max * std::sin(task.param)};
  } else {
    target[0] = task.param;
  }
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int i = 0; i < d; ++i) {
    double x = params.gain * (target[i] - state.velocity[i]);
    if (params.noise > 0.0) x += params.noise * noise(rng);
    a[i] = std::clamp(x, -bound, bound);
  }
  return a;
}

namespace {

std::vector<float> to_float(const std::vector<double>& v) { return {v.begin(), v.end()}; }

Episode rollout(const env::TaskSpec& task, Behavior kind, Rng& rng, const BehaviorParams& params) {
  Episode ep;
  ep.source = kind;
  ep.transitions.reserve(task.horizon);
  env::EnvState s = env::reset(task, rng);
  for (int t = 0; t < task.horizon; ++t) {
    const auto a = behavior_action(task, s, kind, rng, params);
    const auto res = env::step(task, s, a);
    Transition tr;
    tr.s = to_float(env::observe(task, s));
    tr.a = to_float(a);
    tr.r = static_cast<float>(res.reward);
    tr.s_next = to_float(env::observe(task, res.state));
    tr.done = res.done ? 1.0f : 0.0f;
    ep.transitions.push_back(std::move(tr));
    s = res.state;
  }
  return ep;
}

}  // namespace

OfflineDataset generate_dataset(const env::TaskSpec& task, Quality quality, int n_episodes, std::uint64_t seed,
                                const BehaviorParams& params) {
  task.validate();
  if (n_episodes < 1) throw std::invalid_argument("generate_dataset: n_episodes must be >= 1");
  if (quality == Quality::MediumRandom && n_episodes < 2) {
    throw std::invalid_argument("generate_dataset: M-R needs at least 2 episodes");
  }
  std::vector<Behavior> kinds(n_episodes, Behavior::Medium);
  if (quality == Quality::MediumRandom) {
    std::fill(kinds.begin() + (n_episodes + 1) / 2, kinds.end(), Behavior::Random);
    Rng order = make_rng(seed, "order");
    std::shuffle(kinds.begin(), kinds.end(), order);
  }

  OfflineDataset ds;
  ds.task = task;
  ds.quality = quality;
  ds.behavior = params;
  ds.state_dim = task.state_dim();
  ds.action_dim = task.action_dim();
  ds.episodes.reserve(n_episodes);
  Rng rng = make_rng(seed, "rollouts");
  for (Behavior k : kinds) ds.episodes.push_back(rollout(task, k, rng, params));
  return ds;
}

DatasetStats dataset_stats(const OfflineDataset& ds) {
  const std::size_t n = ds.transition_count();
  if (n == 0) throw std::invalid_argument("dataset_stats: empty dataset");
  DatasetStats st;
  st.episode_count = ds.episodes.size();
  st.transition_count = n;
  st.state_mean.assign(ds.state_dim, 0.0);
  st.state_std.assign(ds.state_dim, 0.0);

  double ret_sum = 0.0;
  for (const auto& e : ds.episodes) {
    for (const auto& t : e.transitions) {
      ret_sum += t.r;
      for (int i = 0; i < ds.state_dim; ++i) st.state_mean[i] += t.s[i];
    }
  }
  st.mean_return = ret_sum / static_cast<double>(st.episode_count);
  for (auto& m : st.state_mean) m /= static_cast<double>(n);

  // centred second pass
  for (const auto& e : ds.episodes) {
    for (const auto& t : e.transitions) {
      for (int i = 0; i < ds.state_dim; ++i) {
        const double d = t.s[i] - st.state_mean[i];
        st.state_std[i] += d * d;
      }
    }
  }
  for (auto& s : st.state_std) s = std::max(std::sqrt(s / static_cast<double>(n)), kStdFloor);
  return st;
}

Normalizer Normalizer::identity(int dim) {
  return {nn::VecR::Zero(dim), nn::VecR::Ones(dim)};
}

Normalizer Normalizer::from_stats(const DatasetStats& stats) {
  const auto dim = static_cast<Eigen::Index>(stats.state_mean.size());
  Normalizer n{nn::VecR(dim), nn::VecR(dim)};
  for (Eigen::Index i = 0; i < dim; ++i) {
    n.mean(i) = static_cast<float>(stats.state_mean[i]);
    n.inv_std(i) = static_cast<float>(1.0 / stats.state_std[i]);
  }
  return n;
}

nn::MatR Normalizer::apply(const nn::MatR& x) const {
  if (x.rows() != mean.size()) throw ShapeError("normalizer dimension mismatch");
  return ((x.colwise() - mean).array().colwise() * inv_std.array()).matrix();
}

TransitionTable::TransitionTable(std::span<const Transition> transitions) {
  if (transitions.empty()) return;
  const auto sd = static_cast<Eigen::Index>(transitions.front().s.size());
  const auto ad = static_cast<Eigen::Index>(transitions.front().a.size());
  const auto n = static_cast<Eigen::Index>(transitions.size());
  states_.resize(sd, n);
  actions_.resize(ad, n);
  next_states_.resize(sd, n);
  rewards_.resize(n);
  dones_.resize(n);
  for (Eigen::Index c = 0; c < n; ++c) {
    const auto& t = transitions[c];
    if (static_cast<Eigen::Index>(t.s.size()) != sd || static_cast<Eigen::Index>(t.a.size()) != ad ||
        static_cast<Eigen::Index>(t.s_next.size()) != sd) {
      throw ShapeError("transition dims are inconsistent");
    }
    states_.col(c) = Eigen::Map<const nn::VecR>(t.s.data(), sd);
    actions_.col(c) = Eigen::Map<const nn::VecR>(t.a.data(), ad);
    next_states_.col(c) = Eigen::Map<const nn::VecR>(t.s_next.data(), sd);
    rewards_(c) = t.r;
    dones_(c) = t.done;
  }
}

TransitionTable TransitionTable::from_dataset(const OfflineDataset& ds) {
  std::vector<Transition> flat;
  flat.reserve(ds.transition_count());
  for (const auto& e : ds.episodes) flat.insert(flat.end(), e.transitions.begin(), e.transitions.end());
  return TransitionTable(flat);
}

Batch TransitionTable::gather(std::span<const Eigen::Index> indices) const {
  const auto b = static_cast<Eigen::Index>(indices.size());
  Batch out;
  out.states.resize(states_.rows(), b);
  out.actions.resize(actions_.rows(), b);
  out.next_states.resize(next_states_.rows(), b);
  out.rewards.resize(b);
  out.dones.resize(b);
  for (Eigen::Index c = 0; c < b; ++c) {
    const Eigen::Index i = indices[c];
    out.states.col(c) = states_.col(i);
    out.actions.col(c) = actions_.col(i);
    out.next_states.col(c) = next_states_.col(i);
    out.rewards(c) = rewards_(i);
    out.dones(c) = dones_(i);
  }
  return out;
}

Batch TransitionTable::sample(Rng& rng, int batch_size) const {
  if (empty()) throw std::invalid_argument("cannot sample from an empty transition table");
  std::uniform_int_distribution<Eigen::Index> pick(0, size() - 1);
  std::vector<Eigen::Index> idx(batch_size);
  for (auto& i : idx) i = pick(rng);
  return gather(idx);
}

Batch TransitionTable::all() const {
  return Batch{states_, actions_, rewards_, next_states_, dones_};
}

}  // namespace corl::data
