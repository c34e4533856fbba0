#pragma once

#include <cstdint>
#include <functional>

#include "corl/data/dataset.hpp"
#include "corl/env/point_mass.hpp"
#include "corl/nn/mlp.hpp"
#include "corl/random.hpp"

namespace corl::agent {

struct NetShape {
  int hidden_width = 128;
  int hidden_layers = 2;

  std::vector<int> dims(int in, int out) const;
};

struct TargetNoise {
  double sigma = 0.2;
  double clip = 0.5;
};

struct Td3BcConfig {
  NetShape net;
  int batch_size = 256;
  double actor_lr = 3e-3;
  double critic_lr = 1e-3;
  double alpha = 2.5;
  double tau = 0.005;
  int policy_delay = 2;
  TargetNoise noise;
};

// Deterministic state -> action policy with its input normalization.
struct SoloPolicy {
  nn::Mlp net;
  data::Normalizer normalizer;
  double action_bound = 1.0;
  int task_index = 1;

  static SoloPolicy random(int state_dim, int action_dim, double action_bound, const NetShape& shape,
                           data::Normalizer normalizer, Rng& rng);

  nn::MatR act(const nn::MatR& states) const { return net.forward(normalizer.apply(states)); }
  env::ActionMap action_map() const;
};

// Twin Q networks over (normalized state, action) with Polyak-averaged targets.
struct Critic {
  nn::Mlp q1, q2, q1_target, q2_target;
  nn::AdamState opt1, opt2;
  data::Normalizer normalizer;
  double tau = 0.005;

  static Critic random(int state_dim, int action_dim, const NetShape& shape, data::Normalizer normalizer,
                       double tau, Rng& rng);

  nn::MatR input(const nn::MatR& states, const nn::MatR& actions) const;
  Eigen::VectorXf q1_value(const nn::MatR& states, const nn::MatR& actions) const;
  void soft_update_targets();
};

// Maps a batch of raw states (columns) to actions.
using ActionFn = std::function<nn::MatR(const nn::MatR& states)>;

// y = r + gamma * (1 - done) * min(Q1', Q2')(s', clip(target_actor(s') + eps)).
// Throws NonFiniteError naming the first offending transition.
Eigen::VectorXd bellman_targets(const Critic& critic, const ActionFn& target_actor, const data::Batch& batch,
                                double gamma, const TargetNoise& noise, double action_bound, Rng& rng);

// One Adam step of both online critics toward the Bellman targets. Returns the
// summed MSE of the two critics. Target networks are not touched.
double critic_update(Critic& critic, const ActionFn& target_actor, const data::Batch& batch, double gamma,
                     const TargetNoise& noise, double action_bound, double lr, Rng& rng);

struct ActorObjective {
  double loss = 0.0;
  double lambda = 0.0;
  nn::MatR action_grad;  // d loss / d policy_actions
};

inline constexpr double kLambdaFloor = 1e-6;

// loss = -lambda * mean Q1(s, pi(s)) + mean ||pi(s) - a||^2,
// lambda = alpha / max(mean |Q1(s, pi(s))|, 1e-6), held constant for the gradient.
ActorObjective td3bc_actor_objective(const Critic& critic, const nn::MatR& states, const nn::MatR& policy_actions,
                                     const nn::MatR& data_actions, double alpha);

double actor_update(SoloPolicy& policy, nn::AdamState& opt, const Critic& critic, const data::Batch& batch,
                    double alpha, double lr);

// Owns one actor/critic pair and runs the TD3+BC schedule: critic every step,
// actor and target networks every `policy_delay` steps.
class Td3BcTrainer {
 public:
  Td3BcTrainer(SoloPolicy actor, Critic critic, const Td3BcConfig& cfg, double gamma, Rng rng);

  void step(const data::TransitionTable& table);
  std::int64_t steps_done() const { return steps_; }

  const SoloPolicy& actor() const { return actor_; }
  const Critic& critic() const { return critic_; }
  SoloPolicy& actor() { return actor_; }
  Critic& critic() { return critic_; }

  double last_critic_loss() const { return last_critic_loss_; }
  double last_actor_loss() const { return last_actor_loss_; }

 private:
  SoloPolicy actor_;
  nn::Mlp actor_target_;
  nn::AdamState actor_opt_;
  Critic critic_;
  Td3BcConfig cfg_;
  double gamma_;
  Rng rng_;
  std::int64_t steps_ = 0;
  double last_critic_loss_ = 0.0;
  double last_actor_loss_ = 0.0;
};

struct OfflineResult {
  SoloPolicy policy;
  Critic critic;
};

OfflineResult train_offline(const data::OfflineDataset& dataset, int steps, const Td3BcConfig& cfg,
                            std::uint64_t seed);

}  // namespace corl::agent
