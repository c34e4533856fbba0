#pragma once

#include <cstdint>
#include <vector>

#include "corl/agent/td3bc.hpp"
#include "corl/data/dataset.hpp"
#include "corl/nn/mlp.hpp"

namespace corl::model {

struct Prediction {
  Eigen::VectorXd mean;      // predicted next state
  Eigen::VectorXd variance;  // per-dimension disagreement

  double total_variance() const { return variance.sum(); }
};

// Anything that predicts a next state with an uncertainty estimate. The
// learned ensemble is the production implementation; tests substitute exact
// or hand-built models.
class TransitionModel {
 public:
  virtual ~TransitionModel() = default;
  virtual Prediction predict(const nn::VecR& state, const nn::VecR& action) const = 0;
};

struct EnsembleConfig {
  int members = 5;
  agent::NetShape net;
  int batch_size = 256;
  double lr = 1e-3;
  bool bootstrap = true;     // per-member resampling of the training set
  bool diverse_init = true;  // per-member init and batch seeds
};

// K MLPs mapping (normalized state, action) to a scaled state delta.
class DynamicsEnsemble : public TransitionModel {
 public:
  DynamicsEnsemble() = default;
  DynamicsEnsemble(std::vector<nn::Mlp> members, data::Normalizer state_norm, nn::VecR delta_scale);

  int size() const { return static_cast<int>(members_.size()); }
  int state_dim() const { return state_norm_.dim(); }
  const nn::Mlp& member(int k) const { return members_.at(k); }
  nn::Mlp& member(int k) { return members_.at(k); }
  const std::vector<nn::Mlp>& members() const { return members_; }
  const data::Normalizer& state_normalizer() const { return state_norm_; }
  const nn::VecR& delta_scale() const { return delta_scale_; }

  nn::MatR member_input(const nn::MatR& states, const nn::MatR& actions) const;
  // Absolute next-state predictions of member k for a batch.
  nn::MatR member_next_states(int k, const nn::MatR& states, const nn::MatR& actions) const;

  // mean = s + average member delta; variance = population variance of the
  // members' absolute next-state predictions.
  Prediction predict(const nn::VecR& state, const nn::VecR& action) const override;

 private:
  std::vector<nn::Mlp> members_;
  data::Normalizer state_norm_;
  nn::VecR delta_scale_;
};

// Interleavable trainer: each step() is one Adam step per member on a
// member-specific batch (MSE on the scaled state delta).
class EnsembleTrainer {
 public:
  EnsembleTrainer(const data::OfflineDataset& dataset, const EnsembleConfig& cfg, std::uint64_t seed);

  void step();
  double last_loss() const { return last_loss_; }
  const DynamicsEnsemble& ensemble() const { return ensemble_; }
  DynamicsEnsemble release() { return std::move(ensemble_); }

 private:
  EnsembleConfig cfg_;
  DynamicsEnsemble ensemble_;
  data::TransitionTable table_;
  std::vector<nn::AdamState> opts_;
  std::vector<Rng> rngs_;
  std::vector<std::vector<Eigen::Index>> bootstrap_;
  double last_loss_ = 0.0;
};

DynamicsEnsemble train_ensemble(const data::OfflineDataset& dataset, int steps, const EnsembleConfig& cfg,
                                std::uint64_t seed);

// Threshold on the model's disagreement. Relative: trust iff
// var(s, a_policy) <= factor * var(s, a_data). Absolute: var(s, a_policy) <= absolute.
struct UncertaintyRule {
  enum class Mode { Relative, Absolute };
  Mode mode = Mode::Relative;
  double factor = 2.0;
  double absolute = 0.0;
};

bool uncertainty_ok(const TransitionModel& model, const nn::VecR& state, const nn::VecR& policy_action,
                    const nn::VecR& data_action, const UncertaintyRule& rule = {});

}  // namespace corl::model
