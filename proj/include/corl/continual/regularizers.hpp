#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "corl/continual/policy.hpp"

namespace corl::continual {

enum class Method { None, Bc, Dbc, Ewc, Si, Gem, Agem };

Method parse_method(std::string_view tag);
std::string to_string(Method m);

// Parameter vectors grow as heads are appended; anchors and importances
// recorded earlier cover a prefix of the current parameters.
struct RegularizerState {
  Method method = Method::None;
  double strength = 0.0;
  double si_damping = 0.1;

  std::vector<Eigen::VectorXd> anchors;  // EWC: one per task; SI: latest only
  std::vector<Eigen::VectorXd> fisher;   // EWC, parallel to anchors
  Eigen::VectorXd omega;                 // SI importance
  Eigen::VectorXd path;                  // SI running path integral
  Eigen::VectorXd task_start;            // SI parameters at task start

  bool consolidated() const { return !anchors.empty(); }
  bool operator==(const RegularizerState&) const = default;
};

RegularizerState make_regularizer(Method method, double strength, double si_damping = 0.1);

// EWC: sum_t sum_i F_ti (theta_i - anchor_ti)^2 * c/2.  SI: sum_i omega_i (theta_i - anchor_i)^2 * c.
double penalty(const RegularizerState& state, const Eigen::Ref<const Eigen::VectorXd>& params);
Eigen::VectorXd penalty_gradient(const RegularizerState& state, const Eigen::Ref<const Eigen::VectorXd>& params);

// Mean squared per-sample gradient of ||pi_task(s) - a||^2.
Eigen::VectorXd estimate_fisher(const MultiHeadPolicy& policy, int task, const nn::MatR& states,
                                const nn::MatR& actions);

void ewc_consolidate(RegularizerState& state, const Eigen::VectorXd& params, Eigen::VectorXd fisher);

void si_begin_task(RegularizerState& state, const Eigen::VectorXd& params);
// Path integral update for one optimizer step: w += -g * delta.
void si_accumulate(RegularizerState& state, const Eigen::VectorXd& task_grad, const Eigen::VectorXd& delta);
// omega += w / (Delta^2 + xi); anchor <- params.
void si_consolidate(RegularizerState& state, const Eigen::VectorXd& params);

}  // namespace corl::continual
