#pragma once

#include <cstdint>
#include <vector>

#include "corl/continual/policy.hpp"
#include "corl/continual/projection.hpp"
#include "corl/continual/regularizers.hpp"
#include "corl/metrics/metrics.hpp"
#include "corl/select/selection.hpp"

namespace corl::continual {

struct SequenceConfig {
  double lambda_r = 1.0;
  ReplayNorm replay_norm = ReplayNorm::OverN;
  int steps = 10000;
  int capacity = 1000;
  select::Selector selector = select::Selector::Mbes;
  Method method = Method::Dbc;
  int eval_episodes = 10;
  int ensemble_steps = -1;  // negative: same as steps

  agent::Td3BcConfig td3;
  model::EnsembleConfig ensemble;
  select::MbesConfig mbes;
  select::BaselineConfig baseline;

  double ewc_strength = 100.0;
  double si_strength = 1.0;
  double si_damping = 0.1;
  int fisher_samples = 1000;

  void validate() const;  // throws std::invalid_argument naming the field
  bool uses_buffers() const;
  bool needs_model() const;
  int effective_ensemble_steps() const { return ensemble_steps < 0 ? steps : ensemble_steps; }
};

// Everything that survives a task boundary. Critics, mu_n and the dynamics
// model are rebuilt for every task.
struct SequenceState {
  MultiHeadPolicy policy;
  RegularizerState regularizer;
  std::vector<select::ReplayBuffer> buffers;
  metrics::ResultMatrix results;
  int tasks_done = 0;
};

// Runs one task at a time so callers can checkpoint between tasks. The task
// and dataset vectors must outlive the runner.
class SequenceRunner {
 public:
  SequenceRunner(const std::vector<env::TaskSpec>& tasks, const std::vector<data::OfflineDataset>& datasets,
                 const SequenceConfig& cfg, std::uint64_t seed);
  SequenceRunner(const std::vector<env::TaskSpec>& tasks, const std::vector<data::OfflineDataset>& datasets,
                 const SequenceConfig& cfg, std::uint64_t seed, SequenceState resume);

  int task_count() const { return static_cast<int>(tasks_->size()); }
  bool done() const { return state_.tasks_done == task_count(); }
  void run_next_task();

  const SequenceState& state() const { return state_; }
  SequenceState release() { return std::move(state_); }

 private:
  void train_dbc(int n, agent::SoloPolicy mu, agent::Critic& critic_out, model::EnsembleTrainer* ens);
  void train_actor_critic(int n, agent::Critic& critic, model::EnsembleTrainer* ens);
  std::vector<data::Batch> replay_batches(Rng& rng, int batch_size) const;

  const std::vector<env::TaskSpec>* tasks_;
  const std::vector<data::OfflineDataset>* datasets_;
  SequenceConfig cfg_;
  std::uint64_t seed_;
  SequenceState state_;
  std::vector<data::TransitionTable> buffer_tables_;
};

struct SequenceResult {
  MultiHeadPolicy policy;
  metrics::ResultMatrix results;
  std::vector<select::ReplayBuffer> buffers;
};

SequenceResult learn_task_sequence(const std::vector<env::TaskSpec>& tasks,
                                   const std::vector<data::OfflineDataset>& datasets, const SequenceConfig& cfg,
                                   std::uint64_t seed);

struct MultitaskResult {
  MultiHeadPolicy policy;
  std::vector<double> returns;
};

// Joint training on all datasets: cfg.steps * N iterations, each drawing a
// task uniformly and updating that task's critic and head.
MultitaskResult learn_multitask(const std::vector<env::TaskSpec>& tasks,
                                const std::vector<data::OfflineDataset>& datasets, const SequenceConfig& cfg,
                                std::uint64_t seed);

}  // namespace corl::continual
