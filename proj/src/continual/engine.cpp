#include "corl/continual/engine.hpp"

#include <optional>
#include <stdexcept>

namespace corl::continual {

void SequenceConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw std::invalid_argument(field + ": " + why);
  };
  if (!(lambda_r >= 0.0)) fail("lambda_r", "must be >= 0");
  if (steps < 1) fail("steps", "must be >= 1");
  if (capacity < 1) fail("capacity", "must be >= 1");
  if (eval_episodes < 1) fail("eval_episodes", "must be >= 1");
  if (td3.batch_size < 1) fail("batch_size", "must be >= 1");
  if (td3.policy_delay < 1) fail("policy_delay", "must be >= 1");
  if (!(td3.actor_lr > 0.0)) fail("actor_lr", "must be > 0");
  if (!(td3.critic_lr > 0.0)) fail("critic_lr", "must be > 0");
  if (!(td3.alpha > 0.0)) fail("alpha", "must be > 0");
  if (!(td3.tau > 0.0 && td3.tau <= 1.0)) fail("tau", "must lie in (0, 1]");
  if (td3.net.hidden_width < 1 || td3.net.hidden_layers < 1) fail("hidden", "network needs width and depth >= 1");
  if (ensemble.members < 2) fail("ensemble_members", "must be >= 2");
  if (!(ensemble.lr > 0.0)) fail("ensemble_lr", "must be > 0");
  if (!(ewc_strength >= 0.0)) fail("ewc_strength", "must be >= 0");
  if (!(si_strength >= 0.0)) fail("si_strength", "must be >= 0");
  if (!(si_damping > 0.0)) fail("si_damping", "must be > 0");
  if (fisher_samples < 1) fail("fisher_samples", "must be >= 1");
  if (!(mbes.rule.factor > 0.0)) fail("uncertainty_factor", "must be > 0");
}

bool SequenceConfig::uses_buffers() const {
  return method == Method::Dbc || method == Method::Bc || method == Method::Gem || method == Method::Agem;
}

bool SequenceConfig::needs_model() const {
  return uses_buffers() && (selector == select::Selector::Mbes || selector == select::Selector::Model);
}

namespace {

void check_inputs(const std::vector<env::TaskSpec>& tasks, const std::vector<data::OfflineDataset>& datasets) {
  if (tasks.empty()) throw std::invalid_argument("task sequence is empty");
  if (tasks.size() != datasets.size()) throw std::invalid_argument("need exactly one dataset per task");
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const auto& ds = datasets[i];
    if (ds.transition_count() == 0) throw std::invalid_argument("dataset " + std::to_string(i + 1) + " is empty");
    if (ds.state_dim != datasets[0].state_dim || ds.action_dim != datasets[0].action_dim) {
      throw ShapeError("datasets disagree on state/action dimensions");
    }
  }
}

RegularizerState regularizer_for(const SequenceConfig& cfg) {
  switch (cfg.method) {
    case Method::Ewc: return make_regularizer(Method::Ewc, cfg.ewc_strength);
    case Method::Si: return make_regularizer(Method::Si, cfg.si_strength, cfg.si_damping);
    default: return make_regularizer(Method::None, 0.0);
  }
}

MultiHeadPolicy initial_policy(const std::vector<data::OfflineDataset>& datasets, const SequenceConfig& cfg,
                               std::uint64_t seed) {
  const auto& first = datasets.front();
  Rng rng = make_rng(seed, "policy-init");
  return MultiHeadPolicy::create(first.state_dim, first.action_dim, first.task.action_bound, cfg.td3.net,
                                 data::Normalizer::from_stats(data::dataset_stats(first)), rng);
}

}  // namespace

SequenceRunner::SequenceRunner(const std::vector<env::TaskSpec>& tasks,
                               const std::vector<data::OfflineDataset>& datasets, const SequenceConfig& cfg,
                               std::uint64_t seed)
    : tasks_(&tasks), datasets_(&datasets), cfg_(cfg), seed_(seed) {
  cfg.validate();
  check_inputs(tasks, datasets);
  state_.policy = initial_policy(datasets, cfg, seed);
  state_.regularizer = regularizer_for(cfg);
  state_.results = metrics::ResultMatrix(static_cast<int>(tasks.size()));
}

SequenceRunner::SequenceRunner(const std::vector<env::TaskSpec>& tasks,
                               const std::vector<data::OfflineDataset>& datasets, const SequenceConfig& cfg,
                               std::uint64_t seed, SequenceState resume)
    : tasks_(&tasks), datasets_(&datasets), cfg_(cfg), seed_(seed), state_(std::move(resume)) {
  cfg.validate();
  check_inputs(tasks, datasets);
  if (state_.results.size() != task_count()) throw std::invalid_argument("resumed state has a different task count");
  if (state_.tasks_done < 0 || state_.tasks_done > task_count() || state_.policy.head_count() != state_.tasks_done) {
    throw std::invalid_argument("resumed state is not at a task boundary");
  }
  if (cfg.uses_buffers() && static_cast<int>(state_.buffers.size()) != state_.tasks_done) {
    throw std::invalid_argument("resumed state is missing replay buffers");
  }
  for (const auto& b : state_.buffers) buffer_tables_.emplace_back(b.transitions);
}

std::vector<data::Batch> SequenceRunner::replay_batches(Rng& rng, int batch_size) const {
  std::vector<data::Batch> out;
  out.reserve(buffer_tables_.size());
  for (const auto& t : buffer_tables_) out.push_back(t.sample(rng, batch_size));
  return out;
}

void SequenceRunner::train_dbc(int n, agent::SoloPolicy mu, agent::Critic& critic_out, model::EnsembleTrainer* ens) {
  const auto& ds = (*datasets_)[static_cast<std::size_t>(n - 1)];
  const auto table = data::TransitionTable::from_dataset(ds);
  const ReplayWeight weight{cfg_.lambda_r, cfg_.replay_norm};
  const int ens_steps = cfg_.effective_ensemble_steps();
  Rng batches = make_rng(seed_, "batches", static_cast<std::uint64_t>(n));

  agent::Td3BcTrainer trainer(std::move(mu), std::move(critic_out), cfg_.td3, ds.task.gamma,
                              make_rng(seed_, "backbone", static_cast<std::uint64_t>(n)));
  for (int t = 0; t < cfg_.steps; ++t) {
    trainer.step(table);
    const data::Batch batch = table.sample(batches, cfg_.td3.batch_size);
    dbc_update(state_.policy, trainer.actor(), batch.states, replay_batches(batches, cfg_.td3.batch_size), weight,
               cfg_.td3.actor_lr);
    if (ens && t < ens_steps) ens->step();
  }
  if (ens)
    for (int t = cfg_.steps; t < ens_steps; ++t) ens->step();
  critic_out = trainer.critic();
}

void SequenceRunner::train_actor_critic(int n, agent::Critic& critic, model::EnsembleTrainer* ens) {
  const auto& ds = (*datasets_)[static_cast<std::size_t>(n - 1)];
  const auto table = data::TransitionTable::from_dataset(ds);
  const ReplayWeight weight{cfg_.lambda_r, cfg_.replay_norm};
  const int ens_steps = cfg_.effective_ensemble_steps();
  const int batch_size = cfg_.td3.batch_size;
  Rng batches = make_rng(seed_, "batches", static_cast<std::uint64_t>(n));
  auto& policy = state_.policy;
  auto& reg = state_.regularizer;

  nn::Mlp target = policy.composite(n);
  const data::Normalizer& norm = policy.normalizer;
  const agent::ActionFn target_actor = [&](const nn::MatR& s) { return target.forward(norm.apply(s)); };
  if (cfg_.method == Method::Si) si_begin_task(reg, policy.flatten());

  for (int t = 1; t <= cfg_.steps; ++t) {
    const data::Batch batch = table.sample(batches, batch_size);
    agent::critic_update(critic, target_actor, batch, ds.task.gamma, cfg_.td3.noise, policy.action_bound,
                         cfg_.td3.critic_lr, batches);
    if (t % cfg_.td3.policy_delay == 0) {
      PolicyGradients grads = PolicyGradients::zeros_like(policy);
      switch (cfg_.method) {
        case Method::Bc:
          actor_term(policy, n, critic, batch, cfg_.td3.alpha, grads);
          replay_term(policy, n, replay_batches(batches, batch_size), weight, grads);
          break;
        case Method::Gem:
        case Method::Agem: {
          actor_term(policy, n, critic, batch, cfg_.td3.alpha, grads);
          if (n < 2) break;
          std::vector<Eigen::VectorXd> memories;
          if (cfg_.method == Method::Gem) {
            for (int j = 1; j < n; ++j) {
              const auto b = buffer_tables_[static_cast<std::size_t>(j - 1)].sample(batches, batch_size);
              auto mg = PolicyGradients::zeros_like(policy);
              clone_term(policy, j, b.states, b.actions, 1.0, mg);
              memories.push_back(mg.flatten());
            }
            grads.assign(project_gem(grads.flatten(), memories));
          } else {
            // Pooled reference batch split evenly over the stored tasks.
            const int per = std::max(1, batch_size / (n - 1));
            auto mg = PolicyGradients::zeros_like(policy);
            for (int j = 1; j < n; ++j) {
              const auto b = buffer_tables_[static_cast<std::size_t>(j - 1)].sample(batches, per);
              clone_term(policy, j, b.states, b.actions, 1.0 / (n - 1), mg);
            }
            grads.assign(project_agem(grads.flatten(), mg.flatten()));
          }
          break;
        }
        default:
          actor_term(policy, n, critic, batch, cfg_.td3.alpha, grads);
          break;
      }

      if (cfg_.method == Method::Ewc || cfg_.method == Method::Si) {
        const Eigen::VectorXd before = policy.flatten();
        const Eigen::VectorXd task_grad = grads.flatten();
        if (reg.consolidated()) grads.assign(task_grad + penalty_gradient(reg, before));
        apply_gradients(policy, grads, cfg_.td3.actor_lr);
        if (cfg_.method == Method::Si) si_accumulate(reg, task_grad, policy.flatten() - before);
      } else {
        apply_gradients(policy, grads, cfg_.td3.actor_lr);
      }
      nn::soft_update(target, policy.composite(n), cfg_.td3.tau);
      critic.soft_update_targets();
    }
    if (ens && t <= ens_steps) ens->step();
  }
  if (ens)
    for (int t = cfg_.steps; t < ens_steps; ++t) ens->step();
}

void SequenceRunner::run_next_task() {
  if (done()) throw std::logic_error("all tasks have been learned");
  const int n = state_.tasks_done + 1;
  const auto un = static_cast<std::uint64_t>(n);
  const auto& task = (*tasks_)[static_cast<std::size_t>(n - 1)];
  const auto& ds = (*datasets_)[static_cast<std::size_t>(n - 1)];
  auto& policy = state_.policy;

  Rng init = make_rng(seed_, "init", un);
  agent::SoloPolicy mu = start_task(policy, n, init);
  agent::Critic critic =
      agent::Critic::random(ds.state_dim, ds.action_dim, cfg_.td3.net, policy.normalizer, cfg_.td3.tau, init);

  std::optional<model::EnsembleTrainer> ens;
  if (cfg_.needs_model()) ens.emplace(ds, cfg_.ensemble, derive_seed(seed_, "ensemble", un));

  if (cfg_.method == Method::Dbc) {
    train_dbc(n, std::move(mu), critic, ens ? &*ens : nullptr);
  } else {
    train_actor_critic(n, critic, ens ? &*ens : nullptr);
  }

  if (cfg_.method == Method::Ewc) {
    Rng rng = make_rng(seed_, "fisher", un);
    const auto table = data::TransitionTable::from_dataset(ds);
    const auto sample = table.sample(rng, cfg_.fisher_samples);
    ewc_consolidate(state_.regularizer, policy.flatten(), estimate_fisher(policy, n, sample.states, sample.actions));
  } else if (cfg_.method == Method::Si) {
    si_consolidate(state_.regularizer, policy.flatten());
  }

  if (cfg_.uses_buffers()) {
    select::SelectorContext ctx;
    ctx.policy = [&policy, n](const nn::MatR& s) { return policy.act(n, s); };
    ctx.critic = &critic;
    ctx.gamma = ds.task.gamma;
    std::optional<model::DynamicsEnsemble> model;
    if (ens) {
      model.emplace(ens->release());
      ctx.model = &*model;
    }
    const std::uint64_t select_seed = derive_seed(seed_, "select", un);
    select::ReplayBuffer buf =
        cfg_.selector == select::Selector::Mbes
            ? select::mbes_fill_buffer(ds, ctx, cfg_.capacity, select::rho0_sampler(task), cfg_.mbes, select_seed)
            : select::baseline_select(ds, cfg_.selector, cfg_.capacity, ctx, cfg_.baseline, select_seed);
    buf.source_task = n;
    buffer_tables_.emplace_back(buf.transitions);
    state_.buffers.push_back(std::move(buf));
  }

  for (int j = 1; j <= n; ++j) {
    const double ret = env::evaluate_policy((*tasks_)[static_cast<std::size_t>(j - 1)], policy.action_map(j),
                                            cfg_.eval_episodes, derive_seed(seed_, "eval", static_cast<std::uint64_t>(j)));
    state_.results.set(n, j, ret);
  }
  state_.tasks_done = n;
}

SequenceResult learn_task_sequence(const std::vector<env::TaskSpec>& tasks,
                                   const std::vector<data::OfflineDataset>& datasets, const SequenceConfig& cfg,
                                   std::uint64_t seed) {
  SequenceRunner runner(tasks, datasets, cfg, seed);
  while (!runner.done()) runner.run_next_task();
  SequenceState s = runner.release();
  return {std::move(s.policy), std::move(s.results), std::move(s.buffers)};
}

MultitaskResult learn_multitask(const std::vector<env::TaskSpec>& tasks,
                                const std::vector<data::OfflineDataset>& datasets, const SequenceConfig& cfg,
                                std::uint64_t seed) {
  cfg.validate();
  check_inputs(tasks, datasets);
  const int n_tasks = static_cast<int>(tasks.size());
  MultitaskResult out{initial_policy(datasets, cfg, seed), {}};
  auto& policy = out.policy;

  std::vector<agent::Critic> critics;
  std::vector<nn::Mlp> targets;
  std::vector<data::TransitionTable> tables;
  std::vector<std::int64_t> counts(static_cast<std::size_t>(n_tasks), 0);
  for (int n = 1; n <= n_tasks; ++n) {
    const auto& ds = datasets[static_cast<std::size_t>(n - 1)];
    Rng init = make_rng(seed, "init", static_cast<std::uint64_t>(n));
    start_task(policy, n, init);
    critics.push_back(
        agent::Critic::random(ds.state_dim, ds.action_dim, cfg.td3.net, policy.normalizer, cfg.td3.tau, init));
    targets.push_back(policy.composite(n));
    tables.push_back(data::TransitionTable::from_dataset(ds));
  }

  Rng rng = make_rng(seed, "multitask-batches");
  std::uniform_int_distribution<int> pick(0, n_tasks - 1);
  const std::int64_t total = static_cast<std::int64_t>(cfg.steps) * n_tasks;
  for (std::int64_t it = 0; it < total; ++it) {
    const int k = pick(rng);
    const auto uk = static_cast<std::size_t>(k);
    const data::Batch batch = tables[uk].sample(rng, cfg.td3.batch_size);
    const nn::Mlp& target = targets[uk];
    const agent::ActionFn target_actor = [&](const nn::MatR& s) {
      return target.forward(policy.normalizer.apply(s));
    };
    agent::critic_update(critics[uk], target_actor, batch, datasets[uk].task.gamma, cfg.td3.noise,
                         policy.action_bound, cfg.td3.critic_lr, rng);
    if (++counts[uk] % cfg.td3.policy_delay == 0) {
      auto grads = PolicyGradients::zeros_like(policy);
      actor_term(policy, k + 1, critics[uk], batch, cfg.td3.alpha, grads);
      apply_gradients(policy, grads, cfg.td3.actor_lr);
      nn::soft_update(targets[uk], policy.composite(k + 1), cfg.td3.tau);
      critics[uk].soft_update_targets();
    }
  }
  for (int j = 1; j <= n_tasks; ++j) {
    out.returns.push_back(env::evaluate_policy(tasks[static_cast<std::size_t>(j - 1)], policy.action_map(j),
                                               cfg.eval_episodes,
                                               derive_seed(seed, "eval", static_cast<std::uint64_t>(j))));
  }
  return out;
}

}  // namespace corl::continual
