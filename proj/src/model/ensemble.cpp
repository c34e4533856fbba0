#include "corl/model/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace corl::model {

DynamicsEnsemble::DynamicsEnsemble(std::vector<nn::Mlp> members, data::Normalizer state_norm,
                                   nn::VecR delta_scale)
    : members_(std::move(members)), state_norm_(std::move(state_norm)), delta_scale_(std::move(delta_scale)) {
  if (members_.size() < 2) throw std::invalid_argument("an ensemble needs at least 2 members");
  const int sd = state_norm_.dim();
  if (delta_scale_.size() != sd) throw ShapeError("delta scale length must equal the state dim");
  for (const auto& m : members_) {
    if (m.output_dim() != sd || m.input_dim() != members_.front().input_dim()) {
      throw ShapeError("ensemble members must share input/output dims");
    }
  }
}

nn::MatR DynamicsEnsemble::member_input(const nn::MatR& states, const nn::MatR& actions) const {
  nn::MatR x(states.rows() + actions.rows(), states.cols());
  x.topRows(states.rows()) = state_norm_.apply(states);
  x.bottomRows(actions.rows()) = actions;
  return x;
}

nn::MatR DynamicsEnsemble::member_next_states(int k, const nn::MatR& states, const nn::MatR& actions) const {
  const nn::MatR delta = member(k).forward(member_input(states, actions));
  return states + (delta.array().colwise() * delta_scale_.array()).matrix();
}

Prediction DynamicsEnsemble::predict(const nn::VecR& state, const nn::VecR& action) const {
  const nn::MatR s = state;
  const nn::MatR a = action;
  const auto k = static_cast<double>(members_.size());
  const Eigen::Index sd = state.size();
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(sd);
  std::vector<Eigen::VectorXd> preds;
  preds.reserve(members_.size());
  for (int m = 0; m < size(); ++m) {
    preds.push_back(member_next_states(m, s, a).col(0).cast<double>());
    sum += preds.back();
  }
  Prediction p;
  p.mean = sum / k;
  p.variance = Eigen::VectorXd::Zero(sd);
  for (const auto& x : preds) p.variance += (x - p.mean).cwiseAbs2();
  p.variance /= k;
  return p;
}

EnsembleTrainer::EnsembleTrainer(const data::OfflineDataset& dataset, const EnsembleConfig& cfg, std::uint64_t seed)
    : cfg_(cfg), table_(data::TransitionTable::from_dataset(dataset)) {
  if (table_.empty()) throw std::invalid_argument("train_ensemble: empty dataset");
  if (cfg.members < 2) throw std::invalid_argument("train_ensemble: need at least 2 members");
  const int sd = table_.state_dim();
  const int ad = table_.action_dim();

  const nn::MatR delta = table_.next_states() - table_.states();
  nn::VecR scale(sd);
  for (int i = 0; i < sd; ++i) {
    const double mean = delta.row(i).cast<double>().mean();
    const double var = (delta.row(i).cast<double>().array() - mean).square().mean();
    scale(i) = static_cast<float>(std::max(std::sqrt(var), 1e-6));
  }

  std::vector<nn::Mlp> members;
  const auto dims = cfg.net.dims(sd + ad, sd);
  for (int k = 0; k < cfg.members; ++k) {
    const std::uint64_t idx = cfg.diverse_init ? static_cast<std::uint64_t>(k) : 0;
    Rng init = make_rng(seed, "member-init", idx);
    members.push_back(nn::Mlp::random(dims, nn::Activation::Relu, nn::Activation::Identity, 1.0f, init));
    opts_.push_back(nn::AdamState::for_net(members.back()));
    rngs_.push_back(make_rng(seed, "member-batches", idx));
    if (cfg.bootstrap) {
      Rng boot = make_rng(seed, "member-bootstrap", idx);
      std::uniform_int_distribution<Eigen::Index> pick(0, table_.size() - 1);
      std::vector<Eigen::Index> sample(static_cast<std::size_t>(table_.size()));
      for (auto& i : sample) i = pick(boot);
      bootstrap_.push_back(std::move(sample));
    }
  }
  ensemble_ = DynamicsEnsemble(std::move(members), data::Normalizer::from_stats(data::dataset_stats(dataset)),
                               std::move(scale));
}

void EnsembleTrainer::step() {
  double total = 0.0;
  for (int k = 0; k < ensemble_.size(); ++k) {
    Rng& rng = rngs_[k];
    std::vector<Eigen::Index> idx(cfg_.batch_size);
    if (cfg_.bootstrap) {
      const auto& pool = bootstrap_[k];
      std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
      for (auto& i : idx) i = pool[pick(rng)];
    } else {
      std::uniform_int_distribution<Eigen::Index> pick(0, table_.size() - 1);
      for (auto& i : idx) i = pick(rng);
    }
    const data::Batch b = table_.gather(idx);
    const nn::MatR target =
        ((b.next_states - b.states).array().colwise() / ensemble_.delta_scale().array()).matrix();
    nn::Mlp& net = ensemble_.member(k);
    const auto res = nn::compute_gradients<nn::Real>(
        net, ensemble_.member_input(b.states, b.actions),
        [&](const nn::MatR& out) { return nn::mse_loss(out, target); });
    nn::adam_step(net, res.grads, opts_[k], cfg_.lr);
    total += res.loss;
  }
  last_loss_ = total / ensemble_.size();
}

DynamicsEnsemble train_ensemble(const data::OfflineDataset& dataset, int steps, const EnsembleConfig& cfg,
                                std::uint64_t seed) {
  EnsembleTrainer trainer(dataset, cfg, seed);
  for (int i = 0; i < steps; ++i) trainer.step();
  return trainer.release();
}

bool uncertainty_ok(const TransitionModel& model, const nn::VecR& state, const nn::VecR& policy_action,
                    const nn::VecR& data_action, const UncertaintyRule& rule) {
  const double v_policy = model.predict(state, policy_action).total_variance();
  if (rule.mode == UncertaintyRule::Mode::Absolute) return v_policy <= rule.absolute;
  const double v_data = model.predict(state, data_action).total_variance();
  return v_policy <= rule.factor * v_data;
}

}  // namespace corl::model
