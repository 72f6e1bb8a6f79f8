#include "robustpo/furuta.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>
#include <stdexcept>

namespace robustpo::furuta {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

struct Inertias {
  double M1;     // first moment of the pendulum about its pivot
  double M2;     // second moment of the pendulum about its pivot
  double m_tot;  // pendulum + tip mass
  double Jr;     // arm inertia about the motor axis
};

Inertias inertias(const PhysicalParams& p) {
  const double L = p.pendulum_length + p.added_length;
  const double mp = p.pendulum_mass;
  const double mt = p.added_tip_mass;
  return {mp * L / 2.0 + mt * L, mp * L * L / 3.0 + mt * L * L, mp + mt, p.arm_mass * p.arm_length * p.arm_length / 12.0};
}

}  // namespace

void PhysicalParams::validate() const {
  const double positives[] = {arm_mass, arm_length, pendulum_mass, pendulum_length, motor_resistance,
                              motor_torque_constant, motor_back_emf_constant, gravity, voltage_limit};
  for (double v : positives) require(std::isfinite(v) && v > 0.0, "physical parameters must be positive");
  require(std::isfinite(arm_damping) && arm_damping >= 0.0, "arm_damping must be >= 0");
  require(std::isfinite(pendulum_damping) && pendulum_damping >= 0.0, "pendulum_damping must be >= 0");
  require(std::isfinite(added_tip_mass) && added_tip_mass >= 0.0, "added_tip_mass must be >= 0");
  require(std::isfinite(added_length) && pendulum_length + added_length > 0.0, "pendulum length must stay positive");
}

bool SimState::finite() const {
  return std::isfinite(alpha) && std::isfinite(beta) && std::isfinite(omega) && std::isfinite(phi);
}

double ObservationConfig::resolution() const { return 2.0 * std::numbers::pi / encoder_counts_per_rev; }

void ObservationConfig::validate() const {
  require(encoder_counts_per_rev > 0, "encoder_counts_per_rev must be positive");
  require(std::isfinite(control_period) && control_period > 0.0, "control_period must be positive");
  require(substeps >= 1, "substeps must be >= 1");
  require(filter_coefficient >= 0.0 && filter_coefficient < 1.0, "filter_coefficient must be in [0, 1)");
  double sum = 0.0;
  for (double q : sensor_noise_probs) {
    require(q >= 0.0, "sensor noise probabilities must be >= 0");
    sum += q;
  }
  require(std::abs(sum - 1.0) < 1e-9, "sensor noise probabilities must sum to 1");
  require(std::isfinite(actuation_noise_std) && actuation_noise_std >= 0.0, "actuation_noise_std must be >= 0");
}

void PerturbationConfig::validate() const {
  require(std::isfinite(gain_factor) && gain_factor > 0.0, "gain_factor must be positive");
  require(observation_delay_steps >= 0, "observation_delay_steps must be >= 0");
  require(std::isfinite(mass_delta) && std::isfinite(length_delta), "perturbation deltas must be finite");
}

PhysicalParams perturbed_plant(const PhysicalParams& p, const PerturbationConfig& pert) {
  PhysicalParams out = p;
  out.added_tip_mass += pert.mass_delta;
  out.added_length += pert.length_delta;
  return out;
}

Vector4 dynamics_deriv(const SimState& s, double voltage, const PhysicalParams& p) {
  const auto in = inertias(p);
  const double Lr = p.arm_length;
  const double sb = std::sin(s.beta);
  const double cb = std::cos(s.beta);

  const double m11 = in.Jr + in.m_tot * Lr * Lr + in.M2 * sb * sb;
  const double m12 = Lr * in.M1 * cb;
  const double m22 = in.M2;
  const double det = m11 * m22 - m12 * m12;
  if (!(det > 0.0)) throw NumericalError("Furuta mass matrix is singular");

  const double torque = p.motor_torque_constant * (voltage - p.motor_back_emf_constant * s.omega) / p.motor_resistance;
  const double rhs1 = torque - p.arm_damping * s.omega - 2.0 * in.M2 * sb * cb * s.omega * s.phi +
                      Lr * in.M1 * sb * s.phi * s.phi;
  const double rhs2 = -p.pendulum_damping * s.phi + in.M2 * sb * cb * s.omega * s.omega + p.gravity * in.M1 * sb;

  const double alpha_dd = (m22 * rhs1 - m12 * rhs2) / det;
  const double beta_dd = (m11 * rhs2 - m12 * rhs1) / det;
  return {s.omega, s.phi, alpha_dd, beta_dd};
}

std::optional<SimState> step_rk4(const SimState& s, double voltage, const PhysicalParams& p, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("step_rk4: dt must be positive");
  const Vector4 x = s.vec();
  const Vector4 k1 = dynamics_deriv(s, voltage, p);
  const Vector4 k2 = dynamics_deriv(SimState::from(x + 0.5 * dt * k1), voltage, p);
  const Vector4 k3 = dynamics_deriv(SimState::from(x + 0.5 * dt * k2), voltage, p);
  const Vector4 k4 = dynamics_deriv(SimState::from(x + dt * k3), voltage, p);
  const SimState next = SimState::from(x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
  if (!next.finite()) return std::nullopt;
  return next;
}

double quantize(double angle, double resolution) {
  // k * res / res can land a hair under k; snap rounding noise back onto the tick
  const double q = angle / resolution;
  const double r = std::round(q);
  const double count = std::abs(q - r) <= 8.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(q)) ? r : std::floor(q);
  return count * resolution;
}

FilterState initial_filter(const SimState& s, const ObservationConfig& cfg) {
  const double res = cfg.resolution();
  return {quantize(s.alpha, res), quantize(s.beta, res), 0.0, 0.0};
}

Observation observe(const SimState& s, const FilterState& prev, const ObservationConfig& cfg, bool sensor_noise,
                    Rng& rng) {
  const double res = cfg.resolution();
  double a_hat = quantize(s.alpha, res);
  double b_hat = quantize(s.beta, res);
  if (sensor_noise) {
    std::discrete_distribution<int> counts(cfg.sensor_noise_probs.begin(), cfg.sensor_noise_probs.end());
    a_hat += (counts(rng) - 4) * res;
    b_hat += (counts(rng) - 4) * res;
  }
  const double a = cfg.filter_coefficient;
  const double T = cfg.control_period;
  Observation out;
  out.filter.prev_alpha = a_hat;
  out.filter.prev_beta = b_hat;
  out.filter.omega = a * prev.omega + (1.0 - a) * (a_hat - prev.prev_alpha) / T;
  out.filter.phi = a * prev.phi + (1.0 - a) * (b_hat - prev.prev_beta) / T;
  out.value << a_hat, b_hat, out.filter.omega, out.filter.phi;
  return out;
}

double controller_action(const Vector4& obs, const ControllerGains& g, const PerturbationConfig& pert,
                         const ObservationConfig& cfg, double voltage_limit, Rng& rng) {
  double u = pert.gain_factor * g.theta.dot(obs);
  if (pert.actuation_noise && cfg.actuation_noise_std > 0.0) {
    std::normal_distribution<double> noise(0.0, cfg.actuation_noise_std);
    u += noise(rng);
  }
  return std::clamp(u, -voltage_limit, voltage_limit);
}

Trajectory rollout(const ControllerGains& g, const PhysicalParams& p, const ObservationConfig& cfg,
                   const PerturbationConfig& pert, double duration, const SimState& init, std::uint64_t seed) {
  require(duration > 0.0, "rollout: duration must be positive");
  cfg.validate();
  pert.validate();
  const PhysicalParams plant = perturbed_plant(p, pert);
  plant.validate();

  const auto steps = static_cast<std::size_t>(std::llround(duration / cfg.control_period));
  const double dt = cfg.control_period / cfg.substeps;
  Rng sensor_rng(derive_seed(seed, {stream::kSensor}));
  Rng actuation_rng(derive_seed(seed, {stream::kActuation}));

  Trajectory traj;
  traj.control_period = cfg.control_period;
  traj.times.reserve(steps);
  traj.true_states.reserve(steps);
  traj.observations.reserve(steps);
  traj.voltages.reserve(steps);

  const auto d = static_cast<std::size_t>(pert.observation_delay_steps);
  FilterState filter = initial_filter(init, cfg);
  SimState x = init;
  for (std::size_t k = 0; k < steps; ++k) {
    const Observation obs = observe(x, filter, cfg, pert.sensor_noise, sensor_rng);
    filter = obs.filter;
    traj.observations.push_back(obs.value);
    // the delay line starts filled with the first observation
    const Vector4& used = k >= d ? traj.observations[k - d] : traj.observations.front();
    const double u = controller_action(used, g, pert, cfg, plant.voltage_limit, actuation_rng);
    traj.times.push_back(static_cast<double>(k) * cfg.control_period);
    traj.true_states.push_back(x);
    traj.voltages.push_back(u);

    bool ok = true;
    for (int sub = 0; sub < cfg.substeps && ok; ++sub) {
      auto next = step_rk4(x, u, plant, dt);
      if (next) {
        x = *next;
      } else {
        ok = false;
      }
    }
    if (!ok) {
      traj.diverged = true;
      break;
    }
  }
  return traj;
}

void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
  os << "t,alpha,beta,omega,phi,alpha_hat,beta_hat,omega_hat,phi_hat,voltage\n";
  os.precision(17);
  for (std::size_t k = 0; k < traj.size(); ++k) {
    const auto& s = traj.true_states[k];
    const auto& o = traj.observations[k];
    os << traj.times[k] << ',' << s.alpha << ',' << s.beta << ',' << s.omega << ',' << s.phi << ',' << o[0] << ','
       << o[1] << ',' << o[2] << ',' << o[3] << ',' << traj.voltages[k] << '\n';
  }
}

double mechanical_energy(const SimState& s, const PhysicalParams& p) {
  const auto in = inertias(p);
  const double Lr = p.arm_length;
  const double sb = std::sin(s.beta);
  const double cb = std::cos(s.beta);
  const double kinetic = 0.5 * in.Jr * s.omega * s.omega +
                         0.5 * (s.omega * s.omega * (in.m_tot * Lr * Lr + in.M2 * sb * sb) +
                                2.0 * Lr * in.M1 * cb * s.omega * s.phi + in.M2 * s.phi * s.phi);
  return kinetic + p.gravity * in.M1 * cb;
}

Linearization linearize(const SimState& s, double voltage, const PhysicalParams& p, double eps) {
  Linearization lin;
  const Vector4 x = s.vec();
  for (int c = 0; c < 4; ++c) {
    Vector4 hi = x, lo = x;
    hi[c] += eps;
    lo[c] -= eps;
    lin.A.col(c) = (dynamics_deriv(SimState::from(hi), voltage, p) - dynamics_deriv(SimState::from(lo), voltage, p)) /
                   (2.0 * eps);
  }
  lin.B = (dynamics_deriv(s, voltage + eps, p) - dynamics_deriv(s, voltage - eps, p)) / (2.0 * eps);
  return lin;
}

}  // namespace robustpo::furuta
