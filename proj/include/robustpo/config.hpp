#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "robustpo/evaluation.hpp"
#include "robustpo/furuta.hpp"
#include "robustpo/optimizer.hpp"

namespace robustpo::config {

/// Raised for malformed configuration; the message names the offending key.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Multiplicative mismatch applied to the nominal plant for training.
struct TrainingMismatch {
  double pendulum_mass_factor = 0.95;
  double arm_damping_factor = 0.8;
  double pendulum_damping_factor = 0.8;
  double motor_torque_constant_factor = 1.0;

  furuta::PhysicalParams apply(const furuta::PhysicalParams& nominal) const;
  bool operator==(const TrainingMismatch&) const = default;
};

struct GridConfig {
  int delay_max_steps = 16;
  int gain_count = 16;
  double gain_lowest = 0.2;
  double gain_highest = 0.95;

  eval::MarginGrid delay() const { return eval::MarginGrid::delay_steps(delay_max_steps); }
  eval::MarginGrid gain() const { return eval::MarginGrid::gain_geometric(gain_count, gain_lowest, gain_highest); }
  bool operator==(const GridConfig&) const = default;
};

struct TestScenario {
  std::string name;
  furuta::PerturbationConfig perturbation;
  int n_repeats = 5;
  double failure_threshold_deg = 20.0;

  bool operator==(const TestScenario&) const = default;
};

/// standard, motor noise, sensor noise, +2 g at the tip.
std::vector<TestScenario> default_battery();

struct TestSettings {
  double duration = 10.0;  // s
  std::vector<TestScenario> scenarios = default_battery();

  bool operator==(const TestSettings&) const = default;
};

/// Longer re-simulation of front controllers; stability judged on the last second.
struct VerificationSettings {
  double duration = 20.0;
  int trials = 5;

  bool operator==(const VerificationSettings&) const = default;
};

struct RunConfig {
  opt::Mode mode = opt::Mode::RobustGain;
  std::uint64_t seed = 0;
  std::string output_dir = "run";
  furuta::PhysicalParams plant;
  TrainingMismatch training_mismatch;
  furuta::ObservationConfig observation;
  eval::RewardWeights reward;
  eval::StabilityCriterion stability;
  eval::InitialStateRange initial_state;
  GridConfig grids;
  opt::SearchBox search_box;
  opt::Settings optimizer;  // its mode field mirrors `mode`
  gp::Hyperpriors hyperpriors;
  TestSettings test;
  VerificationSettings verification;

  /// Throws ConfigError naming the first invalid field.
  void validate() const;
  bool operator==(const RunConfig&) const;

  /// The environment the optimizer trains on (mismatched plant, no perturbation).
  eval::Environment training_environment() const;
  /// The nominal plant with the same observation, reward and criteria.
  eval::Environment nominal_environment() const;
  opt::Problem problem() const;
  opt::Settings settings() const;
};

/// Missing keys keep their defaults; unknown keys and wrong types are errors.
RunConfig from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& c);

RunConfig parse(const std::string& text);
RunConfig load(const std::filesystem::path& path);
void save(const RunConfig& c, const std::filesystem::path& path);

}  // namespace robustpo::config
