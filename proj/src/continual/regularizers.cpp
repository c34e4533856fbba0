#include "corl/continual/regularizers.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

namespace corl::continual {

Method parse_method(std::string_view tag) {
  std::string t(tag);
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
  if (t == "none") return Method::None;
  if (t == "bc") return Method::Bc;
  if (t == "dbc") return Method::Dbc;
  if (t == "ewc") return Method::Ewc;
  if (t == "si") return Method::Si;
  if (t == "gem") return Method::Gem;
  if (t == "agem") return Method::Agem;
  throw std::invalid_argument("unknown continual method '" + std::string(tag) + "'");
}

std::string to_string(Method m) {
  switch (m) {
    case Method::None: return "none";
    case Method::Bc: return "bc";
    case Method::Dbc: return "dbc";
    case Method::Ewc: return "ewc";
    case Method::Si: return "si";
    case Method::Gem: return "gem";
    case Method::Agem: return "agem";
  }
  return "?";
}

RegularizerState make_regularizer(Method method, double strength, double si_damping) {
  if (!(strength >= 0.0)) throw std::invalid_argument("regularizer strength must be >= 0");
  if (!(si_damping > 0.0)) throw std::invalid_argument("SI damping must be > 0");
  RegularizerState s;
  s.method = method;
  s.strength = strength;
  s.si_damping = si_damping;
  return s;
}

namespace {

Eigen::VectorXd padded(const Eigen::VectorXd& v, Eigen::Index n) {
  if (v.size() > n) throw ShapeError("regularizer state is larger than the parameter vector");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
  out.head(v.size()) = v;
  return out;
}

void require_consolidated(const RegularizerState& s) {
  if (s.method != Method::Ewc && s.method != Method::Si) {
    throw std::invalid_argument("penalty is defined for ewc and si only, not " + to_string(s.method));
  }
  if (!s.consolidated()) throw std::logic_error(to_string(s.method) + " penalty before any consolidation");
}

}  // namespace

double penalty(const RegularizerState& state, const Eigen::Ref<const Eigen::VectorXd>& params) {
  if (state.method == Method::None) return 0.0;
  require_consolidated(state);
  double total = 0.0;
  if (state.method == Method::Ewc) {
    for (std::size_t t = 0; t < state.anchors.size(); ++t) {
      const auto n = state.anchors[t].size();
      if (n > params.size()) throw ShapeError("EWC anchor is larger than the parameter vector");
      total += (state.fisher[t].array() * (params.head(n) - state.anchors[t]).array().square()).sum();
    }
    return total * state.strength / 2.0;
  }
  const auto& anchor = state.anchors.back();
  const auto n = anchor.size();
  if (n > params.size() || state.omega.size() != n) throw ShapeError("SI state does not match the parameters");
  total = (state.omega.array() * (params.head(n) - anchor).array().square()).sum();
  return total * state.strength;
}

Eigen::VectorXd penalty_gradient(const RegularizerState& state, const Eigen::Ref<const Eigen::VectorXd>& params) {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(params.size());
  if (state.method == Method::None) return g;
  require_consolidated(state);
  if (state.method == Method::Ewc) {
    for (std::size_t t = 0; t < state.anchors.size(); ++t) {
      const auto n = state.anchors[t].size();
      g.head(n).array() += state.strength * state.fisher[t].array() * (params.head(n) - state.anchors[t]).array();
    }
    return g;
  }
  const auto& anchor = state.anchors.back();
  const auto n = anchor.size();
  g.head(n) = (2.0 * state.strength) * (state.omega.array() * (params.head(n) - anchor).array()).matrix();
  return g;
}

Eigen::VectorXd estimate_fisher(const MultiHeadPolicy& policy, int task, const nn::MatR& states,
                                const nn::MatR& actions) {
  if (states.cols() == 0) throw std::invalid_argument("fisher estimate needs at least one sample");
  Eigen::VectorXd f = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(policy.parameter_count()));
  auto grads = PolicyGradients::zeros_like(policy);
  for (Eigen::Index i = 0; i < states.cols(); ++i) {
    grads.trunk.set_zero();
    for (auto& h : grads.heads) h.set_zero();
    clone_term(policy, task, states.col(i), actions.col(i), 1.0, grads);
    f.array() += grads.flatten().array().square();
  }
  return f / static_cast<double>(states.cols());
}

void ewc_consolidate(RegularizerState& state, const Eigen::VectorXd& params, Eigen::VectorXd fisher) {
  if (fisher.size() != params.size()) throw ShapeError("fisher diagonal does not match the parameters");
  if ((fisher.array() < 0.0).any()) throw std::invalid_argument("fisher diagonal must be non-negative");
  state.anchors.push_back(params);
  state.fisher.push_back(std::move(fisher));
}

void si_begin_task(RegularizerState& state, const Eigen::VectorXd& params) {
  state.task_start = params;
  state.path = Eigen::VectorXd::Zero(params.size());
}

void si_accumulate(RegularizerState& state, const Eigen::VectorXd& task_grad, const Eigen::VectorXd& delta) {
  if (task_grad.size() != delta.size()) throw ShapeError("SI step: gradient and delta differ in size");
  if (state.path.size() != delta.size()) state.path = padded(state.path, delta.size());
  state.path.array() -= task_grad.array() * delta.array();
}

void si_consolidate(RegularizerState& state, const Eigen::VectorXd& params) {
  const Eigen::Index n = params.size();
  const Eigen::VectorXd start = padded(state.task_start, n);
  const Eigen::VectorXd path = padded(state.path, n);
  const Eigen::ArrayXd d = (params - start).array();
  Eigen::VectorXd omega = padded(state.omega, n);
  omega.array() += (path.array() / (d.square() + state.si_damping)).max(0.0);
  state.omega = std::move(omega);
  state.anchors.assign(1, params);
  state.task_start = params;
  state.path = Eigen::VectorXd::Zero(n);
}

}  // namespace corl::continual
