#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "corl/continual/engine.hpp"
#include "corl/data/dataset.hpp"
#include "corl/env/point_mass.hpp"

namespace corl::bench {

// Rejected configuration; `field` names the offending key.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::invalid_argument(field.empty() ? message : field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

struct ExperimentConfig {
  env::Family family = env::Family::PmDir;
  data::Quality quality = data::Quality::MediumRandom;
  int n_tasks = 5;
  int episodes_per_task = 200;
  data::BehaviorParams behavior;
  std::vector<std::uint64_t> seeds{0};
  std::string out_dir = "results";
  continual::SequenceConfig sequence;
  // Grid for the sweep subcommand: key -> values (lambda_r, capacity, steps,
  // selector, method).
  std::map<std::string, std::vector<nlohmann::json>> sweep;

  void validate() const;
  bool operator==(const ExperimentConfig& o) const { return to_json() == o.to_json(); }
  nlohmann::json to_json() const;
};

// Applies defaults for absent keys; malformed JSON, unknown keys and
// out-of-range values each raise ConfigError with a distinct message.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const ExperimentConfig& cfg, const std::filesystem::path& path);

// Parses "0,1,2" or "0-4".
std::vector<std::uint64_t> parse_seed_list(const std::string& text);

}  // namespace corl::bench
