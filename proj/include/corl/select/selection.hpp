#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "corl/agent/td3bc.hpp"
#include "corl/data/dataset.hpp"
#include "corl/model/ensemble.hpp"

namespace corl::select {

enum class Selector { Mbes, Surprise, Reward, Random, Coverage, Match, Model };

// Accepts "supervise" as an alias of "surprise".
Selector parse_selector(std::string_view tag);
std::string to_string(Selector s);

enum class DistanceMetric { StateL2, QFeature };

DistanceMetric parse_metric(std::string_view tag);
std::string to_string(DistanceMetric m);

using PolicyFn = std::function<nn::MatR(const nn::MatR& states)>;

// Networks a selector may consult. Each selector checks for the ones it needs
// and throws MissingReferenceError otherwise.
struct SelectorContext {
  PolicyFn policy;
  const agent::Critic* critic = nullptr;
  const model::TransitionModel* model = nullptr;
  std::optional<double> gamma;
};

struct ReplayBuffer {
  std::vector<data::Transition> transitions;
  std::vector<data::TransitionRef> provenance;
  int capacity = 0;
  int source_task = 0;
  Selector selector = Selector::Random;

  std::size_t size() const { return transitions.size(); }
  bool operator==(const ReplayBuffer&) const = default;
};

// Search structure over every dataset state, in (episode, step) order.
class StateIndex {
 public:
  StateIndex(const data::OfflineDataset& dataset, DistanceMetric metric, const SelectorContext& ctx);

  // Nearest state, ties to the lowest (episode, step). Entries whose flat
  // index is marked in `excluded` are skipped; returns -1 if all are excluded.
  Eigen::Index nearest(const nn::VecR& query, const std::vector<char>* excluded = nullptr) const;

  Eigen::Index size() const { return static_cast<Eigen::Index>(refs_.size()); }
  const data::TransitionRef& ref(Eigen::Index flat) const { return refs_[flat]; }
  Eigen::Index flat_index(const data::TransitionRef& r) const { return offsets_[r.episode] + r.step; }

 private:
  Eigen::VectorXd embed(const nn::VecR& state) const;

  DistanceMetric metric_;
  SelectorContext ctx_;
  Eigen::MatrixXd points_;  // embedding dim x N
  std::vector<data::TransitionRef> refs_;
  std::vector<Eigen::Index> offsets_;
};

data::TransitionRef nearest_state(const data::OfflineDataset& dataset, const nn::VecR& query, DistanceMetric metric,
                                  const SelectorContext& ctx);

struct MbesConfig {
  DistanceMetric metric = DistanceMetric::StateL2;
  model::UncertaintyRule rule;
};

using StateSampler = std::function<nn::VecR(Rng&)>;

// Initial-state distribution of a task, as an observation vector.
StateSampler rho0_sampler(const env::TaskSpec& task);

// Walks the dataset along the learned policy: from the current anchor the
// model predicts where the policy would go and the nearest not-yet-selected
// dataset state becomes the next anchor. When the model is not trusted the
// dataset's own successor is taken instead. Terminal anchors and revisits
// restart the walk from a fresh initial state.
ReplayBuffer mbes_fill_buffer(const data::OfflineDataset& dataset, const SelectorContext& ctx, int capacity,
                              const StateSampler& rho0, const MbesConfig& cfg, std::uint64_t seed);

struct BaselineConfig {
  std::optional<double> coverage_radius;  // default: median pairwise distance of a subsample
  int coverage_subsample = 1000;
};

// Per-episode criterion used by the trajectory-level selectors, in the
// direction each one ranks by (Surprise/Reward: higher first; Match/Model:
// lower first).
std::vector<double> episode_scores(const data::OfflineDataset& dataset, Selector method, const SelectorContext& ctx);

double median_pairwise_distance(const data::OfflineDataset& dataset, int subsample, Rng& rng);

ReplayBuffer baseline_select(const data::OfflineDataset& dataset, Selector method, int capacity,
                             const SelectorContext& ctx, const BaselineConfig& cfg, std::uint64_t seed);

// Buffers share the dataset binary format (a single run of transitions); the
// sidecar carries the selector tag and per-transition provenance.
void write_buffer(const ReplayBuffer& buffer, const std::filesystem::path& path);
ReplayBuffer read_buffer(const std::filesystem::path& path);

}  // namespace corl::select
