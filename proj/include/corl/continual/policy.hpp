#pragma once

#include <vector>

#include "corl/agent/td3bc.hpp"
#include "corl/data/dataset.hpp"
#include "corl/nn/mlp.hpp"

namespace corl::continual {

// Shared trunk (state -> features) with one tanh-scaled head per learned task.
// Task indices are 1-based throughout.
struct MultiHeadPolicy {
  nn::Mlp trunk;
  std::vector<nn::Mlp> heads;
  nn::AdamState trunk_opt;
  std::vector<nn::AdamState> head_opts;
  data::Normalizer normalizer;
  agent::NetShape shape;
  int state_dim = 0;
  int action_dim = 0;
  double action_bound = 1.0;

  static MultiHeadPolicy create(int state_dim, int action_dim, double action_bound, const agent::NetShape& shape,
                                data::Normalizer normalizer, Rng& rng);

  int head_count() const { return static_cast<int>(heads.size()); }
  void add_head(Rng& rng);

  nn::MatR act(int task, const nn::MatR& states) const;
  // trunk followed by head `task`, as a single network on normalized input.
  nn::Mlp composite(int task) const;
  agent::SoloPolicy solo(int task) const;
  env::ActionMap action_map(int task) const;

  std::size_t parameter_count() const;
  // Trunk parameters, then heads in task order.
  Eigen::VectorXd flatten() const;
  void assign(const Eigen::Ref<const Eigen::VectorXd>& flat);

  bool operator==(const MultiHeadPolicy& other) const;

 private:
  const nn::Mlp& head(int task) const;
};

// Gradients laid out like MultiHeadPolicy. `touched[k]` records whether head
// k+1 received any gradient; untouched heads are never stepped.
struct PolicyGradients {
  nn::GradientSet trunk;
  std::vector<nn::GradientSet> heads;
  std::vector<char> touched;

  static PolicyGradients zeros_like(const MultiHeadPolicy& policy);
  Eigen::VectorXd flatten() const;
  // Heads whose segment is non-zero become touched.
  void assign(const Eigen::Ref<const Eigen::VectorXd>& flat);
  PolicyGradients& operator+=(const PolicyGradients& other);
};

// Adds weight * mean_i ||pi_task(s_i) - target_i||^2 to grads; returns that term.
double clone_term(const MultiHeadPolicy& policy, int task, const nn::MatR& states, const nn::MatR& targets,
                  double weight, PolicyGradients& grads);

// Adds the TD3+BC actor objective of head `task` against the critic.
double actor_term(const MultiHeadPolicy& policy, int task, const agent::Critic& critic, const data::Batch& batch,
                  double alpha, PolicyGradients& grads);

// Adam on the trunk and every touched head.
void apply_gradients(MultiHeadPolicy& policy, const PolicyGradients& grads, double lr);

// Appends head n and returns mu_n: a copy of pi_{n-1} for n >= 2, random for n = 1.
agent::SoloPolicy start_task(MultiHeadPolicy& policy, int n, Rng& rng);

enum class ReplayNorm { OverN, OverNMinus1 };

struct ReplayWeight {
  double lambda = 1.0;
  ReplayNorm norm = ReplayNorm::OverN;

  double coefficient(int n) const;
};

struct UpdateResult {
  double loss = 0.0;
  PolicyGradients grads;
};

// lambda * c_n * sum_j E_{B_j} ||pi_j(s) - a||^2 over buffers of tasks 1..n-1.
double replay_term(const MultiHeadPolicy& policy, int n, const std::vector<data::Batch>& buffer_batches,
                   const ReplayWeight& weight, PolicyGradients& grads);

UpdateResult dbc_gradients(const MultiHeadPolicy& policy, const agent::SoloPolicy& mu, const nn::MatR& states,
                           const std::vector<data::Batch>& buffer_batches, const ReplayWeight& weight);
double dbc_update(MultiHeadPolicy& policy, const agent::SoloPolicy& mu, const nn::MatR& states,
                  const std::vector<data::Batch>& buffer_batches, const ReplayWeight& weight, double lr);

UpdateResult bc_gradients(const MultiHeadPolicy& policy, const agent::Critic& critic, const data::Batch& batch,
                          const std::vector<data::Batch>& buffer_batches, const ReplayWeight& weight, double alpha);
double bc_update(MultiHeadPolicy& policy, const agent::Critic& critic, const data::Batch& batch,
                 const std::vector<data::Batch>& buffer_batches, const ReplayWeight& weight, double alpha,
                 double lr);

}  // namespace corl::continual
