#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "corl/random.hpp"

namespace corl::env {

// PM-Dir: 2-D point mass rewarded for velocity along a heading angle.
// PM-Vel: 1-D point mass rewarded for tracking a target speed.
enum class Family { PmDir, PmVel };

Family parse_family(std::string_view tag);
std::string to_string(Family f);

struct TaskSpec {
  Family family = Family::PmDir;
  double param = 0.0;  // heading (rad) for PM-Dir, target speed for PM-Vel
  double gamma = 0.99;
  int horizon = 100;
  double dt = 0.05;
  double v_max = 2.0;
  double action_bound = 1.0;
  double action_cost = 0.01;
  double rho0_sigma = 0.1;
  double r_max = 10.0;

  int dims() const { return family == Family::PmDir ? 2 : 1; }
  int state_dim() const { return 2 * dims(); }
  int action_dim() const { return dims(); }

  // Throws std::invalid_argument naming the offending field.
  void validate() const;

  bool operator==(const TaskSpec&) const = default;
};

struct EnvState {
  std::array<double, 2> position{};
  std::array<double, 2> velocity{};
  int step = 0;

  bool operator==(const EnvState&) const = default;
};

// Observation layout: [position..., velocity...].
std::vector<double> observe(const TaskSpec& task, const EnvState& state);
EnvState from_observation(const TaskSpec& task, std::span<const double> obs, int step = 0);

// Tasks share every field of `base` except the task parameter.
std::vector<TaskSpec> sample_tasks(Family family, int count, std::uint64_t seed, const TaskSpec& base = {});

EnvState reset(const TaskSpec& task, Rng& rng);

struct StepResult {
  EnvState state;
  double reward = 0.0;
  bool done = false;
};

StepResult step(const TaskSpec& task, const EnvState& state, std::span<const double> action);

using ActionMap = std::function<std::vector<double>(std::span<const double> observation)>;

// Mean undiscounted return over `episodes` rollouts of exactly `horizon` steps.
double evaluate_policy(const TaskSpec& task, const ActionMap& policy, int episodes, std::uint64_t seed);

}  // namespace corl::env
