#include "corl/agent/td3bc.hpp"

#include <algorithm>
#include <cmath>

namespace corl::agent {

std::vector<int> NetShape::dims(int in, int out) const {
  std::vector<int> d{in};
  for (int i = 0; i < hidden_layers; ++i) d.push_back(hidden_width);
  d.push_back(out);
  return d;
}

SoloPolicy SoloPolicy::random(int state_dim, int action_dim, double action_bound, const NetShape& shape,
                              data::Normalizer normalizer, Rng& rng) {
  SoloPolicy p;
  const auto dims = shape.dims(state_dim, action_dim);
  p.net = nn::Mlp::random(dims, nn::Activation::Relu, nn::Activation::TanhScaled,
                          static_cast<nn::Real>(action_bound), rng);
  p.normalizer = std::move(normalizer);
  p.action_bound = action_bound;
  return p;
}

env::ActionMap SoloPolicy::action_map() const {
  return [this](std::span<const double> obs) {
    nn::MatR s(static_cast<Eigen::Index>(obs.size()), 1);
    for (std::size_t i = 0; i < obs.size(); ++i) s(static_cast<Eigen::Index>(i), 0) = static_cast<float>(obs[i]);
    const nn::MatR a = act(s);
    return std::vector<double>(a.data(), a.data() + a.size());
  };
}

Critic Critic::random(int state_dim, int action_dim, const NetShape& shape, data::Normalizer normalizer,
                      double tau, Rng& rng) {
  if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("critic tau must lie in (0, 1]");
  Critic c;
  const auto dims = shape.dims(state_dim + action_dim, 1);
  c.q1 = nn::Mlp::random(dims, nn::Activation::Relu, nn::Activation::Identity, 1.0f, rng);
  c.q2 = nn::Mlp::random(dims, nn::Activation::Relu, nn::Activation::Identity, 1.0f, rng);
  c.q1_target = c.q1;
  c.q2_target = c.q2;
  c.opt1 = nn::AdamState::for_net(c.q1);
  c.opt2 = nn::AdamState::for_net(c.q2);
  c.normalizer = std::move(normalizer);
  c.tau = tau;
  return c;
}

nn::MatR Critic::input(const nn::MatR& states, const nn::MatR& actions) const {
  if (states.cols() != actions.cols()) throw ShapeError("critic input: batch sizes differ");
  nn::MatR x(states.rows() + actions.rows(), states.cols());
  x.topRows(states.rows()) = normalizer.apply(states);
  x.bottomRows(actions.rows()) = actions;
  return x;
}

Eigen::VectorXf Critic::q1_value(const nn::MatR& states, const nn::MatR& actions) const {
  return q1.forward(input(states, actions)).row(0).transpose();
}

void Critic::soft_update_targets() {
  nn::soft_update(q1_target, q1, tau);
  nn::soft_update(q2_target, q2, tau);
}

Eigen::VectorXd bellman_targets(const Critic& critic, const ActionFn& target_actor, const data::Batch& batch,
                                double gamma, const TargetNoise& noise, double action_bound, Rng& rng) {
  nn::MatR next_a = target_actor(batch.next_states);
  if (noise.sigma > 0.0) {
    std::normal_distribution<double> n(0.0, noise.sigma * action_bound);
    const double c = noise.clip * action_bound;
    for (Eigen::Index j = 0; j < next_a.cols(); ++j) {
      for (Eigen::Index i = 0; i < next_a.rows(); ++i) {
        const double eps = std::clamp(n(rng), -c, c);
        next_a(i, j) = static_cast<float>(std::clamp(next_a(i, j) + eps, -action_bound, action_bound));
      }
    }
  }
  const nn::MatR x = critic.input(batch.next_states, next_a);
  const nn::MatR t1 = critic.q1_target.forward(x);
  const nn::MatR t2 = critic.q2_target.forward(x);
  Eigen::VectorXd y(batch.size());
  for (Eigen::Index j = 0; j < batch.size(); ++j) {
    const double q = std::min<double>(t1(0, j), t2(0, j));
    y(j) = static_cast<double>(batch.rewards(j)) + gamma * (1.0 - static_cast<double>(batch.dones(j))) * q;
    if (!std::isfinite(y(j))) throw NonFiniteError("non-finite Bellman target", static_cast<long>(j));
  }
  return y;
}

namespace {

double regress(nn::Mlp& q, nn::AdamState& opt, const nn::MatR& x, const Eigen::VectorXd& y, double lr) {
  nn::Tape<nn::Real> tape;
  const nn::MatR out = q.forward(x, tape);
  const double inv_b = 1.0 / static_cast<double>(x.cols());
  nn::MatR grad(1, x.cols());
  double loss = 0.0;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double d = static_cast<double>(out(0, j)) - y(j);
    loss += d * d * inv_b;
    grad(0, j) = static_cast<float>(2.0 * d * inv_b);
  }
  if (!std::isfinite(loss)) throw NonFiniteError("non-finite critic loss", 0);
  auto g = nn::GradientSet::zeros_like(q);
  q.backward(tape, grad, g);
  nn::adam_step(q, g, opt, lr);
  return loss;
}

}  // namespace

double critic_update(Critic& critic, const ActionFn& target_actor, const data::Batch& batch, double gamma,
                     const TargetNoise& noise, double action_bound, double lr, Rng& rng) {
  if (batch.size() == 0) throw std::invalid_argument("critic_update: empty batch");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("critic_update: gamma must lie in [0, 1]");
  const Eigen::VectorXd y = bellman_targets(critic, target_actor, batch, gamma, noise, action_bound, rng);
  const nn::MatR x = critic.input(batch.states, batch.actions);
  return regress(critic.q1, critic.opt1, x, y, lr) + regress(critic.q2, critic.opt2, x, y, lr);
}

ActorObjective td3bc_actor_objective(const Critic& critic, const nn::MatR& states, const nn::MatR& policy_actions,
                                     const nn::MatR& data_actions, double alpha) {
  const Eigen::Index b = states.cols();
  if (b == 0) throw std::invalid_argument("actor objective: empty batch");
  if (!(alpha > 0.0)) throw std::invalid_argument("actor objective: alpha must be positive");
  const double inv_b = 1.0 / static_cast<double>(b);

  nn::Tape<nn::Real> tape;
  const nn::MatR q = critic.q1.forward(critic.input(states, policy_actions), tape);
  const double mean_abs_q = q.cast<double>().cwiseAbs().sum() * inv_b;
  ActorObjective obj;
  obj.lambda = alpha / std::max(mean_abs_q, kLambdaFloor);

  const nn::MatR dq = nn::MatR::Constant(1, b, static_cast<float>(-obj.lambda * inv_b));
  const nn::MatR dx = critic.q1.input_gradient(tape, dq);
  const nn::MatR diff = policy_actions - data_actions;
  obj.action_grad = dx.bottomRows(policy_actions.rows()) + diff * static_cast<float>(2.0 * inv_b);
  obj.loss = -obj.lambda * q.cast<double>().sum() * inv_b + diff.cast<double>().squaredNorm() * inv_b;
  if (!std::isfinite(obj.loss)) throw NonFiniteError("non-finite actor loss", 0);
  return obj;
}

double actor_update(SoloPolicy& policy, nn::AdamState& opt, const Critic& critic, const data::Batch& batch,
                    double alpha, double lr) {
  nn::Tape<nn::Real> tape;
  const nn::MatR a = policy.net.forward(policy.normalizer.apply(batch.states), tape);
  const ActorObjective obj = td3bc_actor_objective(critic, batch.states, a, batch.actions, alpha);
  auto g = nn::GradientSet::zeros_like(policy.net);
  policy.net.backward(tape, obj.action_grad, g);
  nn::adam_step(policy.net, g, opt, lr);
  return obj.loss;
}

Td3BcTrainer::Td3BcTrainer(SoloPolicy actor, Critic critic, const Td3BcConfig& cfg, double gamma, Rng rng)
    : actor_(std::move(actor)),
      actor_target_(actor_.net),
      actor_opt_(nn::AdamState::for_net(actor_.net)),
      critic_(std::move(critic)),
      cfg_(cfg),
      gamma_(gamma),
      rng_(std::move(rng)) {
  critic_.tau = cfg.tau;
}

void Td3BcTrainer::step(const data::TransitionTable& table) {
  const data::Batch batch = table.sample(rng_, cfg_.batch_size);
  const nn::Mlp& target = actor_target_;
  const data::Normalizer& norm = actor_.normalizer;
  const ActionFn target_actor = [&](const nn::MatR& s) { return target.forward(norm.apply(s)); };
  last_critic_loss_ =
      critic_update(critic_, target_actor, batch, gamma_, cfg_.noise, actor_.action_bound, cfg_.critic_lr, rng_);
  ++steps_;
  if (steps_ % cfg_.policy_delay == 0) {
    last_actor_loss_ = actor_update(actor_, actor_opt_, critic_, batch, cfg_.alpha, cfg_.actor_lr);
    nn::soft_update(actor_target_, actor_.net, cfg_.tau);
    critic_.soft_update_targets();
  }
}

OfflineResult train_offline(const data::OfflineDataset& dataset, int steps, const Td3BcConfig& cfg,
                            std::uint64_t seed) {
  if (dataset.transition_count() == 0) throw std::invalid_argument("train_offline: empty dataset");
  if (steps < 0) throw std::invalid_argument("train_offline: steps must be non-negative");
  const auto norm = data::Normalizer::from_stats(data::dataset_stats(dataset));
  Rng init = make_rng(seed, "init");
  SoloPolicy actor = SoloPolicy::random(dataset.state_dim, dataset.action_dim, dataset.task.action_bound, cfg.net,
                                        norm, init);
  Critic critic = Critic::random(dataset.state_dim, dataset.action_dim, cfg.net, norm, cfg.tau, init);
  Td3BcTrainer trainer(std::move(actor), std::move(critic), cfg, dataset.task.gamma, make_rng(seed, "batches"));
  const auto table = data::TransitionTable::from_dataset(dataset);
  for (int i = 0; i < steps; ++i) trainer.step(table);
  return {trainer.actor(), trainer.critic()};
}

}  // namespace corl::agent
