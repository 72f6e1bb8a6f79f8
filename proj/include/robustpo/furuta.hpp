#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "robustpo/rng.hpp"
#include "robustpo/types.hpp"

namespace robustpo::furuta {

/// Rigid-body and motor constants. Defaults approximate a Qube-class
/// desktop Furuta pendulum.
struct PhysicalParams {
  double arm_mass = 0.095;               // kg
  double arm_length = 0.085;             // m, arm pivots at its centre
  double pendulum_mass = 0.024;          // kg, uniform rod
  double pendulum_length = 0.129;        // m
  double arm_damping = 0.0015;           // N m s
  double pendulum_damping = 0.0005;      // N m s
  double motor_resistance = 8.4;         // ohm
  double motor_torque_constant = 0.042;  // N m / A
  double motor_back_emf_constant = 0.042;  // V s / rad
  double gravity = 9.81;                 // m / s^2
  double voltage_limit = 10.0;           // V
  double added_tip_mass = 0.0;           // kg, point mass at the pendulum tip
  double added_length = 0.0;             // m

  void validate() const;
  bool operator==(const PhysicalParams&) const = default;
};

/// x = [alpha, beta, omega, phi]; beta = 0 is upright and is never wrapped.
struct SimState {
  double alpha = 0.0;
  double beta = 0.0;
  double omega = 0.0;
  double phi = 0.0;

  Vector4 vec() const { return {alpha, beta, omega, phi}; }
  static SimState from(const Vector4& v) { return {v[0], v[1], v[2], v[3]}; }
  bool finite() const;
  bool operator==(const SimState&) const = default;
};

struct ObservationConfig {
  int encoder_counts_per_rev = 2048;
  double control_period = 0.002;  // s
  int substeps = 5;
  double filter_coefficient = 0.7;
  /// p(k) for count offsets k = -4..4.
  std::array<double, 9> sensor_noise_probs{0.05, 0.05, 0.05, 0.05, 0.6, 0.05, 0.05, 0.05, 0.05};
  double actuation_noise_std = 0.5;  // V

  double resolution() const;
  void validate() const;
  bool operator==(const ObservationConfig&) const = default;
};

struct PerturbationConfig {
  double gain_factor = 1.0;
  int observation_delay_steps = 0;
  double mass_delta = 0.0;    // kg, attached at the tip
  double length_delta = 0.0;  // m
  bool actuation_noise = false;
  bool sensor_noise = false;

  void validate() const;
  bool operator==(const PerturbationConfig&) const = default;
};

/// The plant with the perturbation's mass/length changes applied.
PhysicalParams perturbed_plant(const PhysicalParams& p, const PerturbationConfig& pert);

struct Trajectory {
  std::vector<double> times;
  std::vector<SimState> true_states;
  std::vector<Vector4> observations;
  std::vector<double> voltages;
  bool diverged = false;
  double control_period = 0.0;

  std::size_t size() const { return times.size(); }
};

/// Time derivative (omega, phi, alpha'', beta'') of the Furuta equations of motion.
Vector4 dynamics_deriv(const SimState& s, double voltage, const PhysicalParams& p);

/// One classical RK4 step with the voltage held. Returns nullopt on a non-finite result.
std::optional<SimState> step_rk4(const SimState& s, double voltage, const PhysicalParams& p, double dt);

/// Encoder + velocity-filter state carried between control steps.
struct FilterState {
  double prev_alpha = 0.0;
  double prev_beta = 0.0;
  double omega = 0.0;
  double phi = 0.0;
};

/// Quantized angle: floor(angle / resolution) * resolution.
double quantize(double angle, double resolution);

/// Filter state for a first observation at `s` (no prior velocity).
FilterState initial_filter(const SimState& s, const ObservationConfig& cfg);

struct Observation {
  Vector4 value;
  FilterState filter;
};

/// Encoder reading plus low-pass filtered finite-difference velocities.
/// `rng` is used only when `sensor_noise` is set.
Observation observe(const SimState& s, const FilterState& prev, const ObservationConfig& cfg, bool sensor_noise,
                    Rng& rng);

/// clamp(kappa * theta^T obs + noise, +-limit).
double controller_action(const Vector4& obs, const ControllerGains& g, const PerturbationConfig& pert,
                         const ObservationConfig& cfg, double voltage_limit, Rng& rng);

/// Closed-loop episode with zero-order hold, RK4 substeps and an observation
/// delay line. Deterministic in `seed`.
Trajectory rollout(const ControllerGains& g, const PhysicalParams& p, const ObservationConfig& cfg,
                   const PerturbationConfig& pert, double duration, const SimState& init, std::uint64_t seed);

void write_trajectory_csv(std::ostream& os, const Trajectory& traj);

/// Total mechanical energy (kinetic + potential, zero at the pivot height).
double mechanical_energy(const SimState& s, const PhysicalParams& p);

/// Finite-difference linearization x' = A x + B u about `s`, `voltage`.
struct Linearization {
  Eigen::Matrix4d A;
  Vector4 B;
};
Linearization linearize(const SimState& s, double voltage, const PhysicalParams& p, double eps = 1e-6);

}  // namespace robustpo::furuta
