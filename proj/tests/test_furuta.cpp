#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "robustpo/evaluation.hpp"
#include "robustpo/furuta.hpp"
#include "support/oracles.hpp"

using namespace robustpo;
using namespace robustpo::furuta;

namespace {

constexpr double kPi = std::numbers::pi;

// Lagrangian energy written out from scratch: uniform rods plus tip mass.
double energy_oracle(const SimState& s, const PhysicalParams& p) {
  const double L = p.pendulum_length + p.added_length;
  const double m = p.pendulum_mass, mt = p.added_tip_mass, Lr = p.arm_length;
  const double first = m * L / 2 + mt * L;
  const double second = m * L * L / 3 + mt * L * L;
  const double arm_inertia = p.arm_mass * Lr * Lr / 12;
  const double T = 0.5 * (arm_inertia + (m + mt) * Lr * Lr + second * std::pow(std::sin(s.beta), 2)) * s.omega * s.omega +
                   Lr * first * std::cos(s.beta) * s.omega * s.phi + 0.5 * second * s.phi * s.phi;
  return T + p.gravity * first * std::cos(s.beta);
}

SimState integrate(SimState s, double voltage_first, double pulse_end, double T, double dt, const PhysicalParams& p) {
  const int steps = static_cast<int>(std::llround(T / dt));
  for (int k = 0; k < steps; ++k) {
    const double v = k * dt < pulse_end - 1e-12 ? voltage_first : 0.0;
    s = *step_rk4(s, v, p, dt);
  }
  return s;
}

}  // namespace

TEST(Dynamics, EquilibriaHaveZeroDerivative) {
  PhysicalParams p;
  EXPECT_LT(dynamics_deriv({}, 0.0, p).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT(dynamics_deriv({0.0, kPi, 0.0, 0.0}, 0.0, p).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Dynamics, UprightIsOpenLoopUnstable) {
  const auto lin = linearize({}, 0.0, PhysicalParams{});
  Eigen::EigenSolver<Eigen::Matrix4d> es(lin.A);
  EXPECT_GT(es.eigenvalues().real().maxCoeff(), 0.0);
}

TEST(Dynamics, HangingIsNotUnstable) {
  const auto lin = linearize({0.0, kPi, 0.0, 0.0}, 0.0, PhysicalParams{});
  Eigen::EigenSolver<Eigen::Matrix4d> es(lin.A);
  EXPECT_LE(es.eigenvalues().real().maxCoeff(), 1e-6);
}

TEST(Rk4, UprightEquilibriumIsFixed) {
  const auto next = step_rk4({}, 0.0, PhysicalParams{}, 0.002);
  ASSERT_TRUE(next);
  EXPECT_LT(next->vec().cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Rk4, FourthOrderConvergence) {
  PhysicalParams p;
  const SimState hang{0.0, kPi, 0.0, 0.0};
  const double dt = 0.01;
  const auto a = integrate(hang, 5.0, 0.1, 1.0, dt, p);
  const auto b = integrate(hang, 5.0, 0.1, 1.0, dt / 2, p);
  const auto c = integrate(hang, 5.0, 0.1, 1.0, dt / 4, p);
  const double ratio = (a.vec() - b.vec()).norm() / (b.vec() - c.vec()).norm();
  EXPECT_GT(ratio, 12.0);
  EXPECT_LT(ratio, 20.0);
}

TEST(Rk4, EnergyConservedWithoutDampingOrMotor) {
  PhysicalParams p;
  p.arm_damping = 0.0;
  p.pendulum_damping = 0.0;
  p.motor_back_emf_constant = 1e-300;
  SimState s{0.0, kPi - 0.5, 1.0, 0.0};
  const double e0 = energy_oracle(s, p);
  EXPECT_NEAR(mechanical_energy(s, p), e0, 1e-15);
  double worst = 0.0;
  for (int k = 0; k < 5000; ++k) {
    s = *step_rk4(s, 0.0, p, 1e-3);
    worst = std::max(worst, std::abs(energy_oracle(s, p) - e0) / std::abs(e0));
  }
  EXPECT_LE(worst, 1e-6);
}

TEST(Rk4, HangingMotionDecaysWithDamping) {
  PhysicalParams p;
  SimState s{0.0, kPi + 0.1, 0.0, 0.0};
  const double e0 = energy_oracle(s, p);
  double early = 0.0, late = 0.0;
  for (int k = 0; k < 10000; ++k) {
    s = *step_rk4(s, 0.0, p, 1e-3);
    if (k < 1000) early = std::max(early, std::abs(s.phi));
    if (k >= 9000) late = std::max(late, std::abs(s.phi));
  }
  EXPECT_LT(late, early);
  EXPECT_LT(energy_oracle(s, p), e0);
}

TEST(Observe, QuantizerFixedPointAndBound) {
  ObservationConfig cfg;
  const double res = cfg.resolution();
  EXPECT_DOUBLE_EQ(res, 2 * kPi / 2048);
  Rng rng(1);
  for (int k = -3000; k <= 3000; k += 7) {
    const SimState s{k * res, -k * res, 0.0, 0.0};
    const auto o = observe(s, initial_filter(s, cfg), cfg, false, rng);
    EXPECT_EQ(o.value[0], k * res) << k;
    EXPECT_EQ(o.value[1], -k * res) << k;
  }
  std::uniform_real_distribution<double> u(-4.0, 4.0);
  for (int t = 0; t < 10000; ++t) {
    const SimState s{u(rng), u(rng), 0.0, 0.0};
    const auto o = observe(s, initial_filter(s, cfg), cfg, false, rng);
    EXPECT_LT(std::abs(o.value[0] - s.alpha), res);
    EXPECT_LT(std::abs(o.value[1] - s.beta), res);
  }
}

TEST(Observe, VelocityEstimateDecaysGeometrically) {
  ObservationConfig cfg;
  Rng rng(2);
  const SimState s{0.0, 0.0, 0.0, 0.0};
  FilterState f = initial_filter(s, cfg);
  f.omega = 1.0;
  f.phi = -2.0;
  for (int k = 1; k <= 20; ++k) {
    f = observe(s, f, cfg, false, rng).filter;
    EXPECT_NEAR(f.omega, std::pow(cfg.filter_coefficient, k), 1e-15);
    EXPECT_NEAR(f.phi, -2.0 * std::pow(cfg.filter_coefficient, k), 1e-15);
  }
}

TEST(Observe, VelocityEstimateTracksRamp) {
  ObservationConfig cfg;
  Rng rng(3);
  const double rate = 50 * cfg.resolution() / cfg.control_period;
  SimState s;
  FilterState f = initial_filter(s, cfg);
  for (int k = 1; k <= 200; ++k) {
    s.alpha = k * 50 * cfg.resolution();
    f = observe(s, f, cfg, false, rng).filter;
  }
  EXPECT_NEAR(f.omega, rate, 1e-6 * rate);
}

TEST(Observe, SensorNoiseHistogram) {
  ObservationConfig cfg;
  const double res = cfg.resolution();
  Rng rng(4);
  const int n = 100000;
  std::array<int, 9> counts{};
  const SimState s{0.0, 10 * res, 0.0, 0.0};
  const auto f = initial_filter(s, cfg);
  for (int i = 0; i < n; ++i) {
    const auto o = observe(s, f, cfg, true, rng);
    const int off = static_cast<int>(std::lround((o.value[1] - 10 * res) / res));
    ASSERT_GE(off, -4);
    ASSERT_LE(off, 4);
    ++counts[off + 4];
  }
  for (int c = 0; c < 9; ++c) {
    const double p = c == 4 ? 0.6 : 0.05;
    const double sd = std::sqrt(n * p * (1 - p));
    EXPECT_NEAR(counts[c], n * p, 3 * sd) << "offset " << c - 4;
  }
}

TEST(ControllerAction, Examples) {
  ObservationConfig cfg;
  Rng rng(5);
  PerturbationConfig none;
  const Vector4 obs(0.1, -0.2, 0.3, 0.4);
  EXPECT_EQ(controller_action(obs, ControllerGains(), none, cfg, 10.0, rng), 0.0);
  const ControllerGains g(1.0, 2.0, 3.0, 4.0);
  PerturbationConfig half;
  half.gain_factor = 0.5;
  EXPECT_DOUBLE_EQ(controller_action(obs, g, half, cfg, 10.0, rng), 0.5 * controller_action(obs, g, none, cfg, 10.0, rng));
  EXPECT_EQ(controller_action(Vector4(20.0, 0, 0, 0), ControllerGains(1, 0, 0, 0), none, cfg, 10.0, rng), 10.0);
  EXPECT_EQ(controller_action(Vector4(-20.0, 0, 0, 0), ControllerGains(1, 0, 0, 0), none, cfg, 10.0, rng), -10.0);
}

TEST(ControllerAction, ActuationNoiseHasConfiguredSpread) {
  ObservationConfig cfg;
  PerturbationConfig noisy;
  noisy.actuation_noise = true;
  Rng rng(6);
  const int n = 100000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = controller_action(Vector4::Zero(), ControllerGains(), noisy, cfg, 10.0, rng);
    s += u;
    s2 += u * u;
  }
  const double mean = s / n, sd = std::sqrt(s2 / n - mean * mean);
  EXPECT_NEAR(mean, 0.0, 3 * 0.5 / std::sqrt(n));
  EXPECT_NEAR(sd, 0.5, 0.01);
}

TEST(Rollout, StepCountAndCsv) {
  const auto traj = rollout(ControllerGains(), {}, {}, {}, 5.0, {}, 1);
  EXPECT_EQ(traj.size(), 2500u);
  EXPECT_FALSE(traj.diverged);
  std::ostringstream os;
  write_trajectory_csv(os, traj);
  std::istringstream is(os.str());
  std::string header;
  std::getline(is, header);
  EXPECT_EQ(header, "t,alpha,beta,omega,phi,alpha_hat,beta_hat,omega_hat,phi_hat,voltage");
}

TEST(Rollout, UprightEquilibriumPreservedWithoutInput) {
  const auto traj = rollout(ControllerGains(), {}, {}, {}, 5.0, {}, 2);
  double worst = 0.0;
  for (const auto& s : traj.true_states) worst = std::max(worst, std::abs(s.beta));
  EXPECT_LE(worst, 1e-9);
}

TEST(Rollout, DeterministicGivenSeed) {
  PerturbationConfig pert;
  pert.actuation_noise = true;
  pert.sensor_noise = true;
  const ControllerGains g = oracle::pole_placement_gains({});
  const SimState init{0.05, 0.03, 0.0, 0.0};
  const auto a = rollout(g, {}, {}, pert, 2.0, init, 7);
  const auto b = rollout(g, {}, {}, pert, 2.0, init, 7);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_EQ(a.true_states[k], b.true_states[k]);
    EXPECT_EQ(a.voltages[k], b.voltages[k]);
  }
  const auto c = rollout(g, {}, {}, pert, 2.0, init, 8);
  EXPECT_NE(a.voltages.back(), c.voltages.back());
}

TEST(Rollout, ZeroDelayIsIdentity) {
  const ControllerGains g = oracle::pole_placement_gains({});
  const SimState init{0.05, 0.03, 0.0, 0.0};
  PerturbationConfig zero;
  zero.observation_delay_steps = 0;
  const auto a = rollout(g, {}, {}, {}, 1.0, init, 3);
  const auto b = rollout(g, {}, {}, zero, 1.0, init, 3);
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_EQ(a.voltages[k], b.voltages[k]);
}

TEST(Rollout, DelayedVoltageUsesObservationFromDStepsEarlier) {
  const ControllerGains g = oracle::pole_placement_gains({});
  const SimState init{0.05, 0.03, 0.0, 0.0};
  for (int d : {1, 3, 7}) {
    PerturbationConfig pert;
    pert.observation_delay_steps = d;
    const auto traj = rollout(g, {}, {}, pert, 0.5, init, 4);
    for (std::size_t k = 0; k < traj.size(); ++k) {
      const auto& used = k >= static_cast<std::size_t>(d) ? traj.observations[k - d] : traj.observations[0];
      const double want = std::clamp(g.theta.dot(used), -10.0, 10.0);
      EXPECT_EQ(traj.voltages[k], want) << "d=" << d << " k=" << k;
    }
  }
}

TEST(Rollout, PolePlacementControllerIsStable) {
  const ControllerGains g = oracle::pole_placement_gains({});
  eval::StabilityCriterion crit;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto init = eval::sample_initial_state({}, seed);
    const auto traj = rollout(g, {}, {}, {}, 5.0, init, seed);
    EXPECT_TRUE(eval::is_stable(traj, crit)) << "seed " << seed;
  }
}

TEST(Rollout, ZeroGainsFallOver) {
  const auto traj = rollout(ControllerGains(), {}, {}, {}, 5.0, {0.0, 0.05, 0.0, 0.0}, 5);
  EXPECT_GT(std::abs(traj.true_states.back().beta), 20 * kPi / 180);
}

TEST(PerturbedPlant, AddsTipMassAndLength) {
  PhysicalParams p;
  PerturbationConfig pert;
  pert.mass_delta = 0.002;
  pert.length_delta = 0.01;
  const auto q = perturbed_plant(p, pert);
  EXPECT_DOUBLE_EQ(q.added_tip_mass, 0.002);
  EXPECT_DOUBLE_EQ(q.added_length, 0.01);
  EXPECT_EQ(q.pendulum_mass, p.pendulum_mass);
}

TEST(Validation, RejectsBadParameters) {
  PhysicalParams p;
  p.pendulum_mass = -1.0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  ObservationConfig cfg;
  cfg.sensor_noise_probs[0] = 0.5;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  EXPECT_THROW(rollout(ControllerGains(), {}, {}, {}, 0.0, {}, 1), std::invalid_argument);
}
