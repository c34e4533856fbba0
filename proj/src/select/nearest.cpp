#include <algorithm>
#include <cctype>
#include <limits>

#include "corl/select/selection.hpp"

namespace corl::select {

Selector parse_selector(std::string_view tag) {
  std::string t(tag);
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
  if (t == "mbes") return Selector::Mbes;
  if (t == "surprise" || t == "supervise") return Selector::Surprise;
  if (t == "reward") return Selector::Reward;
  if (t == "random") return Selector::Random;
  if (t == "coverage") return Selector::Coverage;
  if (t == "match") return Selector::Match;
  if (t == "model") return Selector::Model;
  throw std::invalid_argument("unknown selector '" + std::string(tag) + "'");
}

std::string to_string(Selector s) {
  switch (s) {
    case Selector::Mbes: return "mbes";
    case Selector::Surprise: return "surprise";
    case Selector::Reward: return "reward";
    case Selector::Random: return "random";
    case Selector::Coverage: return "coverage";
    case Selector::Match: return "match";
    case Selector::Model: return "model";
  }
  return "?";
}

DistanceMetric parse_metric(std::string_view tag) {
  if (tag == "state-l2") return DistanceMetric::StateL2;
  if (tag == "q-feature") return DistanceMetric::QFeature;
  throw std::invalid_argument("unknown distance metric '" + std::string(tag) + "'");
}

std::string to_string(DistanceMetric m) { return m == DistanceMetric::StateL2 ? "state-l2" : "q-feature"; }

StateIndex::StateIndex(const data::OfflineDataset& dataset, DistanceMetric metric, const SelectorContext& ctx)
    : metric_(metric), ctx_(ctx) {
  if (dataset.transition_count() == 0) throw std::invalid_argument("nearest_state: empty dataset");
  if (metric == DistanceMetric::QFeature) {
    if (ctx.critic == nullptr) throw MissingReferenceError("q-feature metric requires a critic");
    if (!ctx.policy) throw MissingReferenceError("q-feature metric requires a policy");
  }
  Eigen::Index n = 0;
  for (std::size_t e = 0; e < dataset.episodes.size(); ++e) {
    offsets_.push_back(n);
    const auto& tr = dataset.episodes[e].transitions;
    for (std::size_t t = 0; t < tr.size(); ++t) refs_.push_back({static_cast<int>(e), static_cast<int>(t)});
    n += static_cast<Eigen::Index>(tr.size());
  }
  nn::MatR states(dataset.state_dim, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& s = dataset.at(refs_[i].episode, refs_[i].step).s;
    states.col(i) = Eigen::Map<const nn::VecR>(s.data(), dataset.state_dim);
  }
  if (metric == DistanceMetric::StateL2) {
    points_ = states.cast<double>();
  } else {
    const nn::MatR a = ctx.policy(states);
    points_ = ctx.critic->q1.hidden_features(ctx.critic->input(states, a)).cast<double>();
  }
}

Eigen::VectorXd StateIndex::embed(const nn::VecR& state) const {
  if (metric_ == DistanceMetric::StateL2) return state.cast<double>();
  const nn::MatR s = state;
  const nn::MatR a = ctx_.policy(s);
  return ctx_.critic->q1.hidden_features(ctx_.critic->input(s, a)).col(0).cast<double>();
}

Eigen::Index StateIndex::nearest(const nn::VecR& query, const std::vector<char>* excluded) const {
  const Eigen::VectorXd q = embed(query);
  if (q.size() != points_.rows()) throw ShapeError("nearest_state: query has wrong dimension");
  Eigen::Index best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < points_.cols(); ++i) {
    if (excluded && (*excluded)[i]) continue;
    const double d = (points_.col(i) - q).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

data::TransitionRef nearest_state(const data::OfflineDataset& dataset, const nn::VecR& query, DistanceMetric metric,
                                  const SelectorContext& ctx) {
  const StateIndex index(dataset, metric, ctx);
  return index.ref(index.nearest(query));
}

}  // namespace corl::select
