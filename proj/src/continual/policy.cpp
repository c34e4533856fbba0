#include "corl/continual/policy.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace corl::continual {

MultiHeadPolicy MultiHeadPolicy::create(int state_dim, int action_dim, double action_bound,
                                        const agent::NetShape& shape, data::Normalizer normalizer, Rng& rng) {
  if (shape.hidden_layers < 1) throw std::invalid_argument("multi-head policy needs at least one hidden layer");
  if (normalizer.dim() != state_dim) throw ShapeError("normalizer does not match the state dimension");
  MultiHeadPolicy p;
  std::vector<int> dims{state_dim};
  for (int i = 0; i < shape.hidden_layers; ++i) dims.push_back(shape.hidden_width);
  p.trunk = nn::Mlp::random(dims, nn::Activation::Relu, nn::Activation::Relu, 1.0f, rng);
  p.trunk_opt = nn::AdamState::for_net(p.trunk);
  p.normalizer = std::move(normalizer);
  p.shape = shape;
  p.state_dim = state_dim;
  p.action_dim = action_dim;
  p.action_bound = action_bound;
  return p;
}

void MultiHeadPolicy::add_head(Rng& rng) {
  const std::vector<int> dims{shape.hidden_width, action_dim};
  heads.push_back(nn::Mlp::random(dims, nn::Activation::Relu, nn::Activation::TanhScaled,
                                  static_cast<nn::Real>(action_bound), rng));
  head_opts.push_back(nn::AdamState::for_net(heads.back()));
}

const nn::Mlp& MultiHeadPolicy::head(int task) const {
  if (task < 1 || task > head_count()) {
    throw std::out_of_range("no head for task " + std::to_string(task));
  }
  return heads[static_cast<std::size_t>(task - 1)];
}

nn::MatR MultiHeadPolicy::act(int task, const nn::MatR& states) const {
  return head(task).forward(trunk.forward(normalizer.apply(states)));
}

nn::Mlp MultiHeadPolicy::composite(int task) const { return nn::concat(trunk, head(task)); }

agent::SoloPolicy MultiHeadPolicy::solo(int task) const {
  agent::SoloPolicy p;
  p.net = composite(task);
  p.normalizer = normalizer;
  p.action_bound = action_bound;
  p.task_index = task;
  return p;
}

env::ActionMap MultiHeadPolicy::action_map(int task) const {
  head(task);
  return [this, task](std::span<const double> obs) {
    nn::MatR s(static_cast<Eigen::Index>(obs.size()), 1);
    for (std::size_t i = 0; i < obs.size(); ++i) s(static_cast<Eigen::Index>(i), 0) = static_cast<float>(obs[i]);
    const nn::MatR a = act(task, s);
    return std::vector<double>(a.data(), a.data() + a.size());
  };
}

std::size_t MultiHeadPolicy::parameter_count() const {
  std::size_t n = trunk.parameter_count();
  for (const auto& h : heads) n += h.parameter_count();
  return n;
}

Eigen::VectorXd MultiHeadPolicy::flatten() const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(parameter_count()));
  Eigen::Index at = 0;
  auto put = [&](const nn::Mlp& net) {
    const auto v = net.flatten();
    for (float x : v) out(at++) = x;
  };
  put(trunk);
  for (const auto& h : heads) put(h);
  return out;
}

void MultiHeadPolicy::assign(const Eigen::Ref<const Eigen::VectorXd>& flat) {
  if (flat.size() != static_cast<Eigen::Index>(parameter_count())) {
    throw ShapeError("multi-head assign: parameter count mismatch");
  }
  Eigen::Index at = 0;
  auto take = [&](nn::Mlp& net) {
    const auto n = static_cast<Eigen::Index>(net.parameter_count());
    std::vector<float> v(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = static_cast<float>(flat(at + i));
    net.assign(v);
    at += n;
  };
  take(trunk);
  for (auto& h : heads) take(h);
}

bool MultiHeadPolicy::operator==(const MultiHeadPolicy& o) const {
  return trunk == o.trunk && heads == o.heads && normalizer == o.normalizer && state_dim == o.state_dim &&
         action_dim == o.action_dim && action_bound == o.action_bound;
}

// ---------------------------------------------------------------------------

PolicyGradients PolicyGradients::zeros_like(const MultiHeadPolicy& policy) {
  PolicyGradients g;
  g.trunk = nn::GradientSet::zeros_like(policy.trunk);
  for (const auto& h : policy.heads) g.heads.push_back(nn::GradientSet::zeros_like(h));
  g.touched.assign(policy.heads.size(), 0);
  return g;
}

Eigen::VectorXd PolicyGradients::flatten() const {
  std::vector<Eigen::VectorXd> parts{trunk.flatten()};
  Eigen::Index n = parts[0].size();
  for (const auto& h : heads) {
    parts.push_back(h.flatten());
    n += parts.back().size();
  }
  Eigen::VectorXd out(n);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.segment(at, p.size()) = p;
    at += p.size();
  }
  return out;
}

void PolicyGradients::assign(const Eigen::Ref<const Eigen::VectorXd>& flat) {
  Eigen::Index at = 0;
  const auto t = static_cast<Eigen::Index>(trunk.size());
  trunk.assign(flat.segment(at, t));
  at += t;
  for (std::size_t k = 0; k < heads.size(); ++k) {
    const auto n = static_cast<Eigen::Index>(heads[k].size());
    const auto seg = flat.segment(at, n);
    heads[k].assign(seg);
    if ((seg.array() != 0.0).any()) touched[k] = 1;
    at += n;
  }
  if (at != flat.size()) throw ShapeError("policy gradient assign: size mismatch");
}

PolicyGradients& PolicyGradients::operator+=(const PolicyGradients& o) {
  trunk += o.trunk;
  for (std::size_t k = 0; k < heads.size(); ++k) {
    if (o.touched[k]) {
      heads[k] += o.heads[k];
      touched[k] = 1;
    }
  }
  return *this;
}

namespace {

// Backpropagates d loss / d actions of head `task` through head and trunk.
void backprop_head(const MultiHeadPolicy& policy, int task, const nn::Tape<nn::Real>& trunk_tape,
                   const nn::Tape<nn::Real>& head_tape, const nn::MatR& action_grad, PolicyGradients& grads) {
  const auto k = static_cast<std::size_t>(task - 1);
  const nn::MatR feat_grad = policy.heads[k].backward(head_tape, action_grad, grads.heads[k]);
  policy.trunk.backward(trunk_tape, feat_grad, grads.trunk);
  grads.touched[k] = 1;
}

void check_task(const MultiHeadPolicy& policy, int task, const PolicyGradients& grads) {
  if (task < 1 || task > policy.head_count()) throw std::out_of_range("no head for task " + std::to_string(task));
  if (grads.heads.size() != policy.heads.size()) throw ShapeError("gradient set does not match the policy");
}

}  // namespace

double clone_term(const MultiHeadPolicy& policy, int task, const nn::MatR& states, const nn::MatR& targets,
                  double weight, PolicyGradients& grads) {
  check_task(policy, task, grads);
  const Eigen::Index b = states.cols();
  if (b == 0) throw std::invalid_argument("clone term: empty batch");
  if (targets.cols() != b || targets.rows() != policy.action_dim) throw ShapeError("clone term: target shape");
  nn::Tape<nn::Real> trunk_tape, head_tape;
  const nn::MatR feat = policy.trunk.forward(policy.normalizer.apply(states), trunk_tape);
  const nn::MatR a = policy.heads[static_cast<std::size_t>(task - 1)].forward(feat, head_tape);
  const nn::MatR diff = a - targets;
  const double scale = weight / static_cast<double>(b);
  const double loss = diff.cast<double>().squaredNorm() * scale;
  if (!std::isfinite(loss)) throw NonFiniteError("non-finite cloning loss", 0);
  backprop_head(policy, task, trunk_tape, head_tape, diff * static_cast<nn::Real>(2.0 * scale), grads);
  return loss;
}

double actor_term(const MultiHeadPolicy& policy, int task, const agent::Critic& critic, const data::Batch& batch,
                  double alpha, PolicyGradients& grads) {
  check_task(policy, task, grads);
  nn::Tape<nn::Real> trunk_tape, head_tape;
  const nn::MatR feat = policy.trunk.forward(policy.normalizer.apply(batch.states), trunk_tape);
  const nn::MatR a = policy.heads[static_cast<std::size_t>(task - 1)].forward(feat, head_tape);
  const auto obj = agent::td3bc_actor_objective(critic, batch.states, a, batch.actions, alpha);
  backprop_head(policy, task, trunk_tape, head_tape, obj.action_grad, grads);
  return obj.loss;
}

void apply_gradients(MultiHeadPolicy& policy, const PolicyGradients& grads, double lr) {
  nn::adam_step(policy.trunk, grads.trunk, policy.trunk_opt, lr);
  for (std::size_t k = 0; k < policy.heads.size(); ++k) {
    if (grads.touched[k]) nn::adam_step(policy.heads[k], grads.heads[k], policy.head_opts[k], lr);
  }
}

agent::SoloPolicy start_task(MultiHeadPolicy& policy, int n, Rng& rng) {
  if (n != policy.head_count() + 1) {
    throw std::invalid_argument("start_task: expected task " + std::to_string(policy.head_count() + 1) + ", got " +
                                std::to_string(n));
  }
  policy.add_head(rng);
  if (n == 1) {
    auto mu = agent::SoloPolicy::random(policy.state_dim, policy.action_dim, policy.action_bound, policy.shape,
                                        policy.normalizer, rng);
    mu.task_index = 1;
    return mu;
  }
  auto mu = policy.solo(n - 1);
  mu.task_index = n;
  return mu;
}

double ReplayWeight::coefficient(int n) const {
  if (n < 2) return 0.0;
  return lambda / (norm == ReplayNorm::OverN ? n : n - 1);
}

double replay_term(const MultiHeadPolicy& policy, int n, const std::vector<data::Batch>& buffer_batches,
                   const ReplayWeight& weight, PolicyGradients& grads) {
  if (static_cast<int>(buffer_batches.size()) != n - 1) {
    throw std::invalid_argument("replay needs one buffer batch per previous task (" + std::to_string(n - 1) +
                                "), got " + std::to_string(buffer_batches.size()));
  }
  const double c = weight.coefficient(n);
  if (c == 0.0) return 0.0;
  double loss = 0.0;
  for (int j = 1; j < n; ++j) {
    const auto& b = buffer_batches[static_cast<std::size_t>(j - 1)];
    if (b.size() == 0) throw std::invalid_argument("replay batch for task " + std::to_string(j) + " is empty");
    loss += clone_term(policy, j, b.states, b.actions, c, grads);
  }
  return loss;
}

UpdateResult dbc_gradients(const MultiHeadPolicy& policy, const agent::SoloPolicy& mu, const nn::MatR& states,
                           const std::vector<data::Batch>& buffer_batches, const ReplayWeight& weight) {
  const int n = policy.head_count();
  UpdateResult r{0.0, PolicyGradients::zeros_like(policy)};
  r.loss = clone_term(policy, n, states, mu.act(states), 1.0, r.grads);
  r.loss += replay_term(policy, n, buffer_batches, weight, r.grads);
  return r;
}

double dbc_update(MultiHeadPolicy& policy, const agent::SoloPolicy& mu, const nn::MatR& states,
                  const std::vector<data::Batch>& buffer_batches, const ReplayWeight& weight, double lr) {
  const auto r = dbc_gradients(policy, mu, states, buffer_batches, weight);
  apply_gradients(policy, r.grads, lr);
  return r.loss;
}

UpdateResult bc_gradients(const MultiHeadPolicy& policy, const agent::Critic& critic, const data::Batch& batch,
                          const std::vector<data::Batch>& buffer_batches, const ReplayWeight& weight, double alpha) {
  const int n = policy.head_count();
  UpdateResult r{0.0, PolicyGradients::zeros_like(policy)};
  r.loss = actor_term(policy, n, critic, batch, alpha, r.grads);
  r.loss += replay_term(policy, n, buffer_batches, weight, r.grads);
  return r;
}

double bc_update(MultiHeadPolicy& policy, const agent::Critic& critic, const data::Batch& batch,
                 const std::vector<data::Batch>& buffer_batches, const ReplayWeight& weight, double alpha,
                 double lr) {
  const auto r = bc_gradients(policy, critic, batch, buffer_batches, weight, alpha);
  apply_gradients(policy, r.grads, lr);
  return r.loss;
}

}  // namespace corl::continual
