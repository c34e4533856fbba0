#include "corl/bench/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace corl::bench {

using nlohmann::json;

namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "family", "quality", "selector", "method", "n_tasks", "episodes_per_task", "behavior_gain",
      "behavior_noise", "seeds", "out_dir", "lambda_r", "replay_norm", "steps", "capacity", "eval_episodes",
      "ensemble_steps", "hidden_width", "hidden_layers", "batch_size", "actor_lr", "critic_lr", "alpha", "tau",
      "policy_delay", "target_noise", "target_noise_clip", "ensemble_members", "ensemble_lr",
      "ensemble_batch_size", "ensemble_bootstrap", "ensemble_diverse_init", "uncertainty_mode",
      "uncertainty_factor", "uncertainty_absolute", "distance_metric", "coverage_radius", "coverage_subsample",
      "ewc_strength", "si_strength", "si_damping", "fisher_samples", "sweep"};
  return keys;
}

const std::set<std::string> kSweepKeys = {"lambda_r", "capacity", "steps", "selector", "method"};

class Reader {
 public:
  explicit Reader(const json& j) : j_(j) {}

  bool has(const char* key) const { return j_.contains(key) && !j_.at(key).is_null(); }

  int integer(const char* key, int def) const {
    if (!has(key)) return def;
    const auto& v = j_.at(key);
    if (!v.is_number_integer()) throw ConfigError(key, "expected an integer");
    return v.get<int>();
  }
  double number(const char* key, double def) const {
    if (!has(key)) return def;
    const auto& v = j_.at(key);
    if (!v.is_number()) throw ConfigError(key, "expected a number");
    return v.get<double>();
  }
  bool boolean(const char* key, bool def) const {
    if (!has(key)) return def;
    const auto& v = j_.at(key);
    if (!v.is_boolean()) throw ConfigError(key, "expected true or false");
    return v.get<bool>();
  }
  std::string string(const char* key) const {
    if (!has(key)) throw ConfigError(key, "required field is missing");
    return string(key, "");
  }
  std::string string(const char* key, const std::string& def) const {
    if (!has(key)) return def;
    const auto& v = j_.at(key);
    if (!v.is_string()) throw ConfigError(key, "expected a string");
    return v.get<std::string>();
  }

  template <typename F>
  auto parse(const char* key, F&& fn, const std::string& text) const {
    try {
      return fn(text);
    } catch (const std::invalid_argument&) {
      throw ConfigError(key, "unknown value '" + text + "'");
    }
  }

 private:
  const json& j_;
};

std::string replay_norm_tag(continual::ReplayNorm n) { return n == continual::ReplayNorm::OverN ? "1/n" : "1/(n-1)"; }

continual::ReplayNorm parse_replay_norm(const std::string& s) {
  if (s == "1/n") return continual::ReplayNorm::OverN;
  if (s == "1/(n-1)") return continual::ReplayNorm::OverNMinus1;
  throw std::invalid_argument(s);
}

model::UncertaintyRule::Mode parse_mode(const std::string& s) {
  if (s == "relative") return model::UncertaintyRule::Mode::Relative;
  if (s == "absolute") return model::UncertaintyRule::Mode::Absolute;
  throw std::invalid_argument(s);
}

}  // namespace

ExperimentConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("", "config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!known_keys().count(key)) throw ConfigError(key, "unknown key");
  }
  const Reader r(j);
  ExperimentConfig c;
  auto& s = c.sequence;

  c.family = r.parse("family", [](const std::string& t) { return env::parse_family(t); }, r.string("family"));
  c.quality = r.parse("quality", [](const std::string& t) { return data::parse_quality(t); }, r.string("quality"));
  s.selector =
      r.parse("selector", [](const std::string& t) { return select::parse_selector(t); }, r.string("selector"));
  s.method = r.parse("method", [](const std::string& t) { return continual::parse_method(t); }, r.string("method"));

  c.n_tasks = r.integer("n_tasks", c.n_tasks);
  c.episodes_per_task = r.integer("episodes_per_task", c.episodes_per_task);
  c.behavior.gain = r.number("behavior_gain", c.behavior.gain);
  c.behavior.noise = r.number("behavior_noise", c.behavior.noise);
  if (r.has("seeds")) {
    const auto& v = j.at("seeds");
    if (!v.is_array()) throw ConfigError("seeds", "expected an array of non-negative integers");
    c.seeds.clear();
    for (const auto& x : v) {
      if (!x.is_number_integer() || (!x.is_number_unsigned() && x.get<std::int64_t>() < 0))
        throw ConfigError("seeds", "expected an array of non-negative integers");
      c.seeds.push_back(x.get<std::uint64_t>());
    }
  }
  c.out_dir = r.string("out_dir", c.out_dir);

  s.lambda_r = r.number("lambda_r", s.lambda_r);
  s.replay_norm = r.parse("replay_norm", parse_replay_norm, r.string("replay_norm", replay_norm_tag(s.replay_norm)));
  s.steps = r.integer("steps", s.steps);
  s.capacity = r.integer("capacity", s.capacity);
  s.eval_episodes = r.integer("eval_episodes", s.eval_episodes);
  s.ensemble_steps = r.integer("ensemble_steps", s.ensemble_steps);

  auto& t = s.td3;
  t.net.hidden_width = r.integer("hidden_width", t.net.hidden_width);
  t.net.hidden_layers = r.integer("hidden_layers", t.net.hidden_layers);
  t.batch_size = r.integer("batch_size", t.batch_size);
  t.actor_lr = r.number("actor_lr", t.actor_lr);
  t.critic_lr = r.number("critic_lr", t.critic_lr);
  t.alpha = r.number("alpha", t.alpha);
  t.tau = r.number("tau", t.tau);
  t.policy_delay = r.integer("policy_delay", t.policy_delay);
  t.noise.sigma = r.number("target_noise", t.noise.sigma);
  t.noise.clip = r.number("target_noise_clip", t.noise.clip);

  auto& e = s.ensemble;
  e.net = t.net;
  e.members = r.integer("ensemble_members", e.members);
  e.lr = r.number("ensemble_lr", e.lr);
  e.batch_size = r.integer("ensemble_batch_size", e.batch_size);
  e.bootstrap = r.boolean("ensemble_bootstrap", e.bootstrap);
  e.diverse_init = r.boolean("ensemble_diverse_init", e.diverse_init);

  s.mbes.rule.mode = r.parse("uncertainty_mode", parse_mode, r.string("uncertainty_mode", "relative"));
  s.mbes.rule.factor = r.number("uncertainty_factor", s.mbes.rule.factor);
  s.mbes.rule.absolute = r.number("uncertainty_absolute", s.mbes.rule.absolute);
  s.mbes.metric = r.parse("distance_metric", [](const std::string& x) { return select::parse_metric(x); },
                          r.string("distance_metric", select::to_string(s.mbes.metric)));
  if (r.has("coverage_radius")) s.baseline.coverage_radius = r.number("coverage_radius", 0.0);
  s.baseline.coverage_subsample = r.integer("coverage_subsample", s.baseline.coverage_subsample);

  s.ewc_strength = r.number("ewc_strength", s.ewc_strength);
  s.si_strength = r.number("si_strength", s.si_strength);
  s.si_damping = r.number("si_damping", s.si_damping);
  s.fisher_samples = r.integer("fisher_samples", s.fisher_samples);

  if (r.has("sweep")) {
    const auto& sw = j.at("sweep");
    if (!sw.is_object()) throw ConfigError("sweep", "expected an object of value lists");
    for (const auto& [key, values] : sw.items()) {
      if (!kSweepKeys.count(key)) throw ConfigError("sweep." + key, "not a sweepable key");
      if (!values.is_array() || values.empty()) throw ConfigError("sweep." + key, "expected a non-empty array");
      c.sweep[key] = std::vector<json>(values.begin(), values.end());
    }
  }
  c.validate();
  return c;
}

void ExperimentConfig::validate() const {
  if (n_tasks < 1) throw ConfigError("n_tasks", "must be >= 1");
  if (episodes_per_task < 1) throw ConfigError("episodes_per_task", "must be >= 1");
  if (quality == data::Quality::MediumRandom && episodes_per_task < 2) {
    throw ConfigError("episodes_per_task", "M-R datasets need at least 2 episodes");
  }
  if (!(behavior.noise >= 0.0)) throw ConfigError("behavior_noise", "must be >= 0");
  if (!(behavior.gain > 0.0)) throw ConfigError("behavior_gain", "must be > 0");
  if (seeds.empty()) throw ConfigError("seeds", "at least one seed is required");
  if (out_dir.empty()) throw ConfigError("out_dir", "must not be empty");
  if (sequence.baseline.coverage_radius && !(*sequence.baseline.coverage_radius > 0.0)) {
    throw ConfigError("coverage_radius", "must be > 0");
  }
  if (sequence.baseline.coverage_subsample < 2) throw ConfigError("coverage_subsample", "must be >= 2");
  if (sequence.ensemble.batch_size < 1) throw ConfigError("ensemble_batch_size", "must be >= 1");
  if (sequence.mbes.rule.mode == model::UncertaintyRule::Mode::Absolute && !(sequence.mbes.rule.absolute >= 0.0)) {
    throw ConfigError("uncertainty_absolute", "must be >= 0");
  }
  try {
    sequence.validate();
  } catch (const std::invalid_argument& ex) {
    const std::string msg = ex.what();
    const auto colon = msg.find(": ");
    throw ConfigError(msg.substr(0, colon), colon == std::string::npos ? msg : msg.substr(colon + 2));
  }
  for (const auto& [key, values] : sweep) {
    for (const auto& v : values) {
      json probe = to_json();
      probe.erase("sweep");
      probe[key] = v;
      try {
        config_from_json(probe);
      } catch (const ConfigError& ex) {
        throw ConfigError("sweep." + key, std::string("invalid value ") + v.dump() + " (" + ex.what() + ")");
      }
    }
  }
}

json ExperimentConfig::to_json() const {
  const auto& s = sequence;
  const auto& t = s.td3;
  json j = {
      {"family", env::to_string(family)},
      {"quality", data::to_string(quality)},
      {"selector", select::to_string(s.selector)},
      {"method", continual::to_string(s.method)},
      {"n_tasks", n_tasks},
      {"episodes_per_task", episodes_per_task},
      {"behavior_gain", behavior.gain},
      {"behavior_noise", behavior.noise},
      {"seeds", seeds},
      {"out_dir", out_dir},
      {"lambda_r", s.lambda_r},
      {"replay_norm", replay_norm_tag(s.replay_norm)},
      {"steps", s.steps},
      {"capacity", s.capacity},
      {"eval_episodes", s.eval_episodes},
      {"ensemble_steps", s.ensemble_steps},
      {"hidden_width", t.net.hidden_width},
      {"hidden_layers", t.net.hidden_layers},
      {"batch_size", t.batch_size},
      {"actor_lr", t.actor_lr},
      {"critic_lr", t.critic_lr},
      {"alpha", t.alpha},
      {"tau", t.tau},
      {"policy_delay", t.policy_delay},
      {"target_noise", t.noise.sigma},
      {"target_noise_clip", t.noise.clip},
      {"ensemble_members", s.ensemble.members},
      {"ensemble_lr", s.ensemble.lr},
      {"ensemble_batch_size", s.ensemble.batch_size},
      {"ensemble_bootstrap", s.ensemble.bootstrap},
      {"ensemble_diverse_init", s.ensemble.diverse_init},
      {"uncertainty_mode", s.mbes.rule.mode == model::UncertaintyRule::Mode::Relative ? "relative" : "absolute"},
      {"uncertainty_factor", s.mbes.rule.factor},
      {"uncertainty_absolute", s.mbes.rule.absolute},
      {"distance_metric", select::to_string(s.mbes.metric)},
      {"coverage_subsample", s.baseline.coverage_subsample},
      {"ewc_strength", s.ewc_strength},
      {"si_strength", s.si_strength},
      {"si_damping", s.si_damping},
      {"fisher_samples", s.fisher_samples},
  };
  j["coverage_radius"] = s.baseline.coverage_radius ? json(*s.baseline.coverage_radius) : json(nullptr);
  if (!sweep.empty()) {
    json sw = json::object();
    for (const auto& [k, v] : sweep) sw[k] = v;
    j["sweep"] = sw;
  }
  return j;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& ex) {
    throw ConfigError("", "malformed JSON in " + path.string() + ": " + ex.what());
  }
  return config_from_json(j);
}

void save_config(const ExperimentConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << cfg.to_json().dump(2) << '\n';
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(text);
  std::string item;
  auto num = [&](const std::string& s) -> std::uint64_t {
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
      throw ConfigError("seeds", "malformed seed list '" + text + "'");
    }
    return std::stoull(s);
  };
  while (std::getline(ss, item, ',')) {
    const auto dash = item.find('-');
    if (dash == std::string::npos) {
      out.push_back(num(item));
    } else {
      const auto lo = num(item.substr(0, dash));
      const auto hi = num(item.substr(dash + 1));
      if (hi < lo) throw ConfigError("seeds", "descending seed range '" + item + "'");
      for (auto s = lo; s <= hi; ++s) out.push_back(s);
    }
  }
  if (out.empty()) throw ConfigError("seeds", "empty seed list");
  return out;
}

}  // namespace corl::bench
