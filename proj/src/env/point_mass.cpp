#include "corl/env/point_mass.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace corl::env {

Family parse_family(std::string_view tag) {
  if (tag == "PM-Dir") return Family::PmDir;
  if (tag == "PM-Vel") return Family::PmVel;
  throw std::invalid_argument("unknown task family '" + std::string(tag) + "'");
}

std::string to_string(Family f) { return f == Family::PmDir ? "PM-Dir" : "PM-Vel"; }

void TaskSpec::validate() const {
  auto fail = [](const char* field, const char* why) {
    throw std::invalid_argument(std::string("task.") + field + ": " + why);
  };
  if (!(gamma > 0.0 && gamma <= 1.0)) fail("gamma", "must lie in (0, 1]");
  if (horizon < 1) fail("horizon", "must be >= 1");
  if (!std::isfinite(param)) fail("param", "must be finite");
  if (!(dt > 0.0)) fail("dt", "must be positive");
  if (!(v_max > 0.0)) fail("v_max", "must be positive");
  if (!(action_bound > 0.0)) fail("action_bound", "must be positive");
  if (!(action_cost >= 0.0)) fail("action_cost", "must be non-negative");
  if (!(rho0_sigma >= 0.0)) fail("rho0_sigma", "must be non-negative");
  if (!(r_max > 0.0)) fail("r_max", "must be positive");
}

std::vector<double> observe(const TaskSpec& task, const EnvState& state) {
  const int d = task.dims();
  std::vector<double> obs(2 * d);
  for (int i = 0; i < d; ++i) {
    obs[i] = state.position[i];
    obs[d + i] = state.velocity[i];
  }
  return obs;
}

EnvState from_observation(const TaskSpec& task, std::span<const double> obs, int step) {
  const int d = task.dims();
  if (static_cast<int>(obs.size()) != 2 * d) throw std::invalid_argument("observation has wrong length");
  EnvState s;
  for (int i = 0; i < d; ++i) {
    s.position[i] = obs[i];
    s.velocity[i] = obs[d + i];
  }
  s.step = step;
  return s;
}

std::vector<TaskSpec> sample_tasks(Family family, int count, std::uint64_t seed, const TaskSpec& base) {
  if (count < 1) throw std::invalid_argument("sample_tasks: count must be >= 1");
  Rng rng(seed);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> speed(0.1, 1.0);
  std::vector<TaskSpec> tasks;
  tasks.reserve(count);
  for (int i = 0; i < count; ++i) {
    TaskSpec t = base;
    t.family = family;
    t.param = family == Family::PmDir ? angle(rng) : speed(rng);
    t.validate();
    tasks.push_back(t);
  }
  return tasks;
}

EnvState reset(const TaskSpec& task, Rng& rng) {
  EnvState s;
  if (task.rho0_sigma > 0.0) {
    std::normal_distribution<double> n(0.0, task.rho0_sigma);
    for (int i = 0; i < task.dims(); ++i) s.position[i] = n(rng);
  }
  return s;
}

StepResult step(const TaskSpec& task, const EnvState& state, std::span<const double> action) {
  const int d = task.dims();
  if (static_cast<int>(action.size()) != d) throw std::invalid_argument("step: action has wrong length");
  std::array<double, 2> a{};
  for (int i = 0; i < d; ++i) {
    if (!std::isfinite(action[i])) throw std::invalid_argument("step: non-finite action");
    a[i] = std::clamp(action[i], -task.action_bound, task.action_bound);
  }

  StepResult out;
  out.state = state;
  double effort = 0.0;
  for (int i = 0; i < d; ++i) {
    const double v = std::clamp(state.velocity[i] + a[i] * task.dt, -task.v_max, task.v_max);
    out.state.velocity[i] = v;
    out.state.position[i] = state.position[i] + v * task.dt;
    effort += a[i] * a[i];
  }
  out.state.step = state.step + 1;

  double r = 0.0;
  if (task.family == Family::PmDir) {
    r = out.state.velocity[0] * std::cos(task.param) + out.state.velocity[1] * std::sin(task.param);
  } else {
    r = -std::abs(out.state.velocity[0] - task.param);
  }
  r -= task.action_cost * effort;
  out.reward = std::clamp(r, -task.r_max, task.r_max);
  out.done = out.state.step >= task.horizon;
  return out;
}

double evaluate_policy(const TaskSpec& task, const ActionMap& policy, int episodes, std::uint64_t seed) {
  if (episodes < 1) throw std::invalid_argument("evaluate_policy: episodes must be >= 1");
  Rng rng(seed);
  double total = 0.0;
  for (int e = 0; e < episodes; ++e) {
    EnvState s = reset(task, rng);
    double ret = 0.0;
    for (int t = 0; t < task.horizon; ++t) {
      const auto obs = observe(task, s);
      const auto a = policy(obs);
      const auto res = step(task, s, a);
      ret += res.reward;
      s = res.state;
    }
    total += ret;
  }
  return total / episodes;
}

}  // namespace corl::env
