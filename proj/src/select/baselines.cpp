#include <algorithm>
#include <numeric>

#include "corl/select/selection.hpp"

namespace corl::select {

namespace {

struct EpisodeTable {
  data::TransitionTable table;
  std::vector<Eigen::Index> offsets;
};

EpisodeTable flatten(const data::OfflineDataset& ds) {
  EpisodeTable out;
  out.table = data::TransitionTable::from_dataset(ds);
  Eigen::Index n = 0;
  for (const auto& e : ds.episodes) {
    out.offsets.push_back(n);
    n += static_cast<Eigen::Index>(e.transitions.size());
  }
  out.offsets.push_back(n);
  return out;
}

// Sums per-transition values into per-episode means.
std::vector<double> episode_means(const Eigen::VectorXd& per_transition, const std::vector<Eigen::Index>& offsets) {
  std::vector<double> out(offsets.size() - 1, 0.0);
  for (std::size_t e = 0; e + 1 < offsets.size(); ++e) {
    const Eigen::Index len = offsets[e + 1] - offsets[e];
    if (len > 0) out[e] = per_transition.segment(offsets[e], len).mean();
  }
  return out;
}

void require_policy(const SelectorContext& ctx, const char* who) {
  if (!ctx.policy) throw MissingReferenceError(std::string(who) + " requires the learned policy");
}

}  // namespace

std::vector<double> episode_scores(const data::OfflineDataset& dataset, Selector method, const SelectorContext& ctx) {
  const EpisodeTable ep = flatten(dataset);
  const auto& t = ep.table;
  const Eigen::Index n = t.size();
  Eigen::VectorXd per(n);

  switch (method) {
    case Selector::Reward:
      per = t.rewards().cast<double>();
      break;
    case Selector::Match: {
      require_policy(ctx, "match");
      per = (ctx.policy(t.states()) - t.actions()).cast<double>().colwise().squaredNorm().transpose();
      break;
    }
    case Selector::Surprise: {
      require_policy(ctx, "surprise");
      if (ctx.critic == nullptr) throw MissingReferenceError("surprise requires a critic");
      if (!ctx.gamma) throw MissingReferenceError("surprise requires gamma");
      const Eigen::VectorXd q = ctx.critic->q1_value(t.states(), t.actions()).cast<double>();
      const Eigen::VectorXd q_next =
          ctx.critic->q1_value(t.next_states(), ctx.policy(t.next_states())).cast<double>();
      for (Eigen::Index i = 0; i < n; ++i) {
        const double target = t.rewards()(i) + *ctx.gamma * (1.0 - t.dones()(i)) * q_next(i);
        per(i) = std::abs(target - q(i));
      }
      break;
    }
    case Selector::Model: {
      if (ctx.model == nullptr) throw MissingReferenceError("model selector requires a dynamics model");
      for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::VectorXd pred = ctx.model->predict(t.states().col(i), t.actions().col(i)).mean;
        per(i) = (pred - t.next_states().col(i).cast<double>()).squaredNorm();
      }
      break;
    }
    default:
      throw std::invalid_argument(to_string(method) + " is not a trajectory-level selector");
  }
  return episode_means(per, ep.offsets);
}

double median_pairwise_distance(const data::OfflineDataset& dataset, int subsample, Rng& rng) {
  const auto table = data::TransitionTable::from_dataset(dataset);
  const Eigen::Index n = table.size();
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  if (n > subsample) {
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(static_cast<std::size_t>(subsample));
  }
  std::vector<double> d;
  d.reserve(idx.size() * (idx.size() - 1) / 2);
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (std::size_t j = i + 1; j < idx.size(); ++j)
      d.push_back((table.states().col(idx[i]) - table.states().col(idx[j])).cast<double>().norm());
  if (d.empty()) return 0.0;
  auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  return *mid;
}

ReplayBuffer baseline_select(const data::OfflineDataset& dataset, Selector method, int capacity,
                             const SelectorContext& ctx, const BaselineConfig& cfg, std::uint64_t seed) {
  if (dataset.transition_count() == 0) throw std::invalid_argument("baseline_select: empty dataset");
  if (capacity < 1) throw std::invalid_argument("baseline_select: capacity must be >= 1");

  ReplayBuffer buf;
  buf.capacity = capacity;
  buf.selector = method;
  auto push = [&](int e, int s) {
    buf.transitions.push_back(dataset.at(e, s));
    buf.provenance.push_back({e, s});
  };

  std::vector<data::TransitionRef> refs;
  for (std::size_t e = 0; e < dataset.episodes.size(); ++e)
    for (std::size_t s = 0; s < dataset.episodes[e].transitions.size(); ++s)
      refs.push_back({static_cast<int>(e), static_cast<int>(s)});
  const auto total = static_cast<std::size_t>(refs.size());
  const auto target = std::min<std::size_t>(static_cast<std::size_t>(capacity), total);
  Rng rng(seed);

  switch (method) {
    case Selector::Surprise:
    case Selector::Reward:
    case Selector::Match:
    case Selector::Model: {
      const auto scores = episode_scores(dataset, method, ctx);
      const bool descending = method == Selector::Surprise || method == Selector::Reward;
      std::vector<int> order(scores.size());
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return descending ? scores[a] > scores[b] : scores[a] < scores[b];
      });
      for (int e : order) {
        const int len = static_cast<int>(dataset.episodes[e].transitions.size());
        for (int s = 0; s < len && buf.size() < target; ++s) push(e, s);
        if (buf.size() >= target) break;
      }
      break;
    }
    case Selector::Random: {
      std::vector<std::size_t> idx(total);
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      for (std::size_t i = 0; i < target; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, total - 1);
        std::swap(idx[i], idx[pick(rng)]);
      }
      idx.resize(target);
      std::sort(idx.begin(), idx.end());
      for (auto i : idx) push(refs[i].episode, refs[i].step);
      break;
    }
    case Selector::Coverage: {
      const double radius = cfg.coverage_radius ? *cfg.coverage_radius
                                                : median_pairwise_distance(dataset, cfg.coverage_subsample, rng);
      const auto table = data::TransitionTable::from_dataset(dataset);
      const Eigen::MatrixXd states = table.states().cast<double>();
      const double r2 = radius * radius;
      std::vector<int> neighbours(total, 0);
      std::vector<char> taken(total, 0);
      for (std::size_t k = 0; k < target; ++k) {
        std::size_t best = total;
        for (std::size_t i = 0; i < total; ++i) {
          if (!taken[i] && (best == total || neighbours[i] < neighbours[best])) best = i;
        }
        taken[best] = 1;
        push(refs[best].episode, refs[best].step);
        const auto& c = states.col(static_cast<Eigen::Index>(best));
        for (std::size_t i = 0; i < total; ++i) {
          if ((states.col(static_cast<Eigen::Index>(i)) - c).squaredNorm() < r2) ++neighbours[i];
        }
      }
      break;
    }
    case Selector::Mbes:
      throw std::invalid_argument("mbes is not a baseline selector; use mbes_fill_buffer");
  }
  return buf;
}

}  // namespace corl::select
