#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "corl/env/point_mass.hpp"
#include "corl/nn/mlp.hpp"
#include "corl/random.hpp"

namespace corl::data {

enum class Quality { Medium, MediumRandom };  // "M", "M-R"
enum class Behavior { Medium, Random };

Quality parse_quality(std::string_view tag);
std::string to_string(Quality q);
Behavior parse_behavior(std::string_view tag);
std::string to_string(Behavior b);

struct BehaviorParams {
  double gain = 1.0;
  double noise = 0.3;

  bool operator==(const BehaviorParams&) const = default;
};

struct Transition {
  std::vector<float> s;
  std::vector<float> a;
  float r = 0.0f;
  std::vector<float> s_next;
  float done = 0.0f;

  bool operator==(const Transition&) const = default;
};

struct Episode {
  std::vector<Transition> transitions;
  Behavior source = Behavior::Medium;

  bool operator==(const Episode&) const = default;
};

struct OfflineDataset {
  env::TaskSpec task;
  Quality quality = Quality::Medium;
  BehaviorParams behavior;
  int state_dim = 0;
  int action_dim = 0;
  std::vector<Episode> episodes;

  std::size_t transition_count() const;
  const Transition& at(int episode, int step) const { return episodes[episode].transitions[step]; }

  bool operator==(const OfflineDataset&) const = default;
};

// Scripted controller. Medium: P-controller toward the task objective plus
// Gaussian noise; Random: uniform over the action box.
std::vector<double> behavior_action(const env::TaskSpec& task, const env::EnvState& state, Behavior kind,
                                    Rng& rng, const BehaviorParams& params = {});

// M-R holds ceil(n/2) medium and floor(n/2) random episodes in seeded order.
OfflineDataset generate_dataset(const env::TaskSpec& task, Quality quality, int n_episodes,
                                std::uint64_t seed, const BehaviorParams& params = {});

struct DatasetStats {
  std::size_t episode_count = 0;
  std::size_t transition_count = 0;
  double mean_return = 0.0;
  std::vector<double> state_mean;
  std::vector<double> state_std;  // population std, floored at 1e-3
};

inline constexpr double kStdFloor = 1e-3;

DatasetStats dataset_stats(const OfflineDataset& ds);

// Affine input normalization (x - mean) / std.
struct Normalizer {
  nn::VecR mean;
  nn::VecR inv_std;

  static Normalizer identity(int dim);
  static Normalizer from_stats(const DatasetStats& stats);

  nn::MatR apply(const nn::MatR& x) const;
  int dim() const { return static_cast<int>(mean.size()); }
  bool operator==(const Normalizer& o) const { return mean == o.mean && inv_std == o.inv_std; }
};

struct TransitionRef {
  int episode = 0;
  int step = 0;

  bool operator==(const TransitionRef&) const = default;
  auto operator<=>(const TransitionRef&) const = default;
};

struct Batch {
  nn::MatR states;       // state_dim x B
  nn::MatR actions;      // action_dim x B
  Eigen::VectorXf rewards;
  nn::MatR next_states;  // state_dim x B
  Eigen::VectorXf dones;

  Eigen::Index size() const { return states.cols(); }
};

// Column-per-transition copy of a transition set, used for batch sampling.
class TransitionTable {
 public:
  TransitionTable() = default;
  explicit TransitionTable(std::span<const Transition> transitions);
  static TransitionTable from_dataset(const OfflineDataset& ds);

  Eigen::Index size() const { return states_.cols(); }
  bool empty() const { return size() == 0; }
  int state_dim() const { return static_cast<int>(states_.rows()); }
  int action_dim() const { return static_cast<int>(actions_.rows()); }

  Batch sample(Rng& rng, int batch_size) const;
  Batch gather(std::span<const Eigen::Index> indices) const;
  Batch all() const;

  const nn::MatR& states() const { return states_; }
  const nn::MatR& actions() const { return actions_; }
  const nn::MatR& next_states() const { return next_states_; }
  const Eigen::VectorXf& rewards() const { return rewards_; }
  const Eigen::VectorXf& dones() const { return dones_; }

 private:
  nn::MatR states_, actions_, next_states_;
  Eigen::VectorXf rewards_, dones_;
};

}  // namespace corl::data
