#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "robustpo/furuta.hpp"
#include "robustpo/types.hpp"

namespace robustpo::eval {

using furuta::SimState;
using furuta::Trajectory;

/// r(x, u) = -(x^T Q x + R u^2) with diagonal Q.
struct RewardWeights {
  Vector4 q_diag{1.0, 10.0, 0.0, 0.0};
  double r = 8.0;

  void validate() const;
  bool operator==(const RewardWeights&) const = default;
};

/// Returns are clipped to [kReturnFloor, 0] before scaling.
inline constexpr double kReturnFloor = -500.0;
inline constexpr double kReturnBreakpoint = -20.0;

struct StabilityCriterion {
  double arm_box_deg = 8.0;
  double pend_box_deg = 4.0;
  double window_start = 4.0;  // s
  double window_end = 5.0;    // s
  double episode_length = 5.0;

  void validate() const;
  bool operator==(const StabilityCriterion&) const = default;
};

/// Episodes start uniformly inside +-alpha_deg, +-beta_deg with zero rates.
struct InitialStateRange {
  double alpha_deg = 5.0;
  double beta_deg = 3.0;

  bool operator==(const InitialStateRange&) const = default;
};

SimState sample_initial_state(const InitialStateRange& range, std::uint64_t seed);

/// Everything an experiment needs besides the controller.
struct Environment {
  furuta::PhysicalParams plant;
  furuta::ObservationConfig observation;
  furuta::PerturbationConfig perturbation;
  RewardWeights reward;
  StabilityCriterion stability;
  InitialStateRange initial;
};

double reward(const SimState& s, double u, const RewardWeights& w);

/// Time-averaged reward (left Riemann sum / T); kReturnFloor for diverged episodes.
double episode_return(const Trajectory& traj, const RewardWeights& w);

/// Piecewise-linear map [-500, -20] -> [0, 0.5], [-20, 0] -> [0.5, 1], clipped.
double scale_return(double raw);

struct PerformanceEstimate {
  double scaled = 0.0;  // mean of scaled returns
  std::vector<double> raw_returns;
  int failed_episodes = 0;  // simulator errors, scored at the floor
};

PerformanceEstimate performance_estimate(const ControllerGains& g, const Environment& env, int n_episodes,
                                         std::uint64_t seed);

bool is_stable(const Trajectory& traj, const StabilityCriterion& c);

enum class MarginKind { Delay, Gain };

std::string to_string(MarginKind k);
MarginKind margin_kind_from_string(const std::string& s);

/// Candidate severities ordered from mildest to most severe: delays ascend
/// (control steps), gain factors descend.
struct MarginGrid {
  MarginKind kind = MarginKind::Delay;
  std::vector<double> candidates;

  static MarginGrid delay_steps(int max_steps);
  static MarginGrid gain_geometric(int count, double lowest, double highest);
  void validate() const;
  std::size_t size() const { return candidates.size(); }
  bool operator==(const MarginGrid&) const = default;
};

struct MarginEstimate {
  std::optional<double> raw;  // nullopt: nominal loop or mildest candidate unstable
  double normalized = 0.0;
  int probes = 0;
  int trials = 0;
};

/// One probe verdict, for the audit log.
struct ProbeRecord {
  MarginKind kind;
  double severity;
  bool verdict;
  std::uint64_t seed;
  int trials;
};
using ProbeSink = std::function<void(const ProbeRecord&)>;

/// Environment with the candidate severity applied on top of env.perturbation.
Environment perturbed_environment(const Environment& env, MarginKind kind, double severity);

/// True iff all n_trials rollouts pass is_stable. Stops at the first failure.
bool stability_probe(const ControllerGains& g, double severity, MarginKind kind, const Environment& env,
                     int n_trials, std::uint64_t seed, int* trials_run = nullptr);

struct SearchOutcome {
  std::optional<std::size_t> index;  // last index with a true probe
  int probes = 0;
};

/// Largest index whose probe is true, assuming the probe is monotone
/// (true on a prefix). Uses at most ceil(log2(m + 1)) probes.
SearchOutcome binary_search_last_stable(std::size_t m, const std::function<bool(std::size_t)>& probe);

inline constexpr std::uint64_t kNominalProbeTag = 0xFFFF'FFFFULL;

/// Probes the unperturbed loop first (seed tag kNominalProbeTag); if that is
/// unstable the margin is the sentinel. Otherwise binary search over the grid,
/// candidate i probed with derive_seed(seed, {i}).
MarginEstimate margin_binary_search(const ControllerGains& g, const MarginGrid& grid, const Environment& env,
                                    std::uint64_t seed, int n_trials = 5, const ProbeSink& sink = {});

double normalize_margin(std::optional<double> raw, const MarginGrid& grid);

}  // namespace robustpo::eval
