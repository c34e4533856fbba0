#include "corl/select/selection.hpp"

namespace corl::select {

StateSampler rho0_sampler(const env::TaskSpec& task) {
  return [task](Rng& rng) {
    const auto obs = env::observe(task, env::reset(task, rng));
    nn::VecR s(static_cast<Eigen::Index>(obs.size()));
    for (std::size_t i = 0; i < obs.size(); ++i) s(static_cast<Eigen::Index>(i)) = static_cast<float>(obs[i]);
    return s;
  };
}

namespace {

nn::VecR as_vec(const std::vector<float>& v) {
  return Eigen::Map<const nn::VecR>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

ReplayBuffer mbes_fill_buffer(const data::OfflineDataset& dataset, const SelectorContext& ctx, int capacity,
                              const StateSampler& rho0, const MbesConfig& cfg, std::uint64_t seed) {
  if (dataset.transition_count() == 0) throw std::invalid_argument("mbes: empty dataset");
  if (capacity < 1) throw std::invalid_argument("mbes: capacity must be >= 1");
  if (!ctx.policy) throw MissingReferenceError("mbes requires the learned policy");
  if (ctx.model == nullptr) throw MissingReferenceError("mbes requires a dynamics model");

  const StateIndex index(dataset, cfg.metric, ctx);
  const Eigen::Index total = index.size();
  const auto target = std::min<Eigen::Index>(capacity, total);
  std::vector<char> visited(static_cast<std::size_t>(total), 0);
  Rng rng(seed);

  ReplayBuffer buf;
  buf.capacity = capacity;
  buf.selector = Selector::Mbes;
  buf.transitions.reserve(static_cast<std::size_t>(target));

  Eigen::Index anchor = -1;
  while (static_cast<Eigen::Index>(buf.size()) < target) {
    if (anchor < 0) anchor = index.nearest(rho0(rng), &visited);
    const data::TransitionRef ref = index.ref(anchor);
    const data::Transition& tr = dataset.at(ref.episode, ref.step);
    visited[anchor] = 1;
    buf.transitions.push_back(tr);
    buf.provenance.push_back(ref);

    if (tr.done != 0.0f) {
      anchor = -1;
      continue;
    }
    const nn::VecR s = as_vec(tr.s);
    const nn::VecR a_policy = ctx.policy(nn::MatR(s)).col(0);
    if (model::uncertainty_ok(*ctx.model, s, a_policy, as_vec(tr.a), cfg.rule)) {
      const nn::VecR predicted = ctx.model->predict(s, a_policy).mean.cast<float>();
      anchor = index.nearest(predicted, &visited);
    } else {
      const auto& ep = dataset.episodes[ref.episode].transitions;
      const bool has_next = ref.step + 1 < static_cast<int>(ep.size());
      anchor = has_next ? index.flat_index({ref.episode, ref.step + 1}) : -1;
      if (anchor >= 0 && visited[anchor]) anchor = -1;
    }
  }
  return buf;
}

}  // namespace corl::select
