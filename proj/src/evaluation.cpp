#include "robustpo/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace robustpo::eval {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

}  // namespace

void RewardWeights::validate() const {
  require(q_diag.allFinite() && (q_diag.array() >= 0.0).all(), "reward Q diagonal must be >= 0");
  require(std::isfinite(r) && r > 0.0, "reward R must be positive");
}

void StabilityCriterion::validate() const {
  require(arm_box_deg > 0.0 && pend_box_deg > 0.0, "stability boxes must be positive");
  require(0.0 <= window_start && window_start < window_end && window_end <= episode_length,
          "stability window must lie inside the episode");
}

SimState sample_initial_state(const InitialStateRange& range, std::uint64_t seed) {
  Rng rng(derive_seed(seed, {stream::kInitialState}));
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  SimState s;
  s.alpha = range.alpha_deg * kDeg * unit(rng);
  s.beta = range.beta_deg * kDeg * unit(rng);
  return s;
}

double reward(const SimState& s, double u, const RewardWeights& w) {
  const Vector4 x = s.vec();
  return -(x.cwiseProduct(x).dot(w.q_diag) + w.r * u * u);
}

double episode_return(const Trajectory& traj, const RewardWeights& w) {
  require(traj.size() > 0, "episode_return: empty trajectory");
  if (traj.diverged) return kReturnFloor;
  double sum = 0.0;
  for (std::size_t k = 0; k < traj.size(); ++k) sum += reward(traj.true_states[k], traj.voltages[k], w);
  return sum / static_cast<double>(traj.size());
}

double scale_return(double raw) {
  if (std::isnan(raw)) return 0.0;
  const double x = std::clamp(raw, kReturnFloor, 0.0);
  if (x <= kReturnBreakpoint) return 0.5 * (x - kReturnFloor) / (kReturnBreakpoint - kReturnFloor);
  return 0.5 + 0.5 * (x - kReturnBreakpoint) / (0.0 - kReturnBreakpoint);
}

PerformanceEstimate performance_estimate(const ControllerGains& g, const Environment& env, int n_episodes,
                                         std::uint64_t seed) {
  require(n_episodes >= 1, "performance_estimate: n_episodes must be >= 1");
  PerformanceEstimate out;
  double total = 0.0;
  for (int e = 0; e < n_episodes; ++e) {
    const std::uint64_t ep_seed = derive_seed(seed, {static_cast<std::uint64_t>(e)});
    double raw = kReturnFloor;
    try {
      const SimState init = sample_initial_state(env.initial, ep_seed);
      const auto traj = furuta::rollout(g, env.plant, env.observation, env.perturbation, env.stability.episode_length,
                                        init, ep_seed);
      raw = episode_return(traj, env.reward);
    } catch (const NumericalError&) {
      ++out.failed_episodes;
    }
    out.raw_returns.push_back(raw);
    total += scale_return(raw);
  }
  out.scaled = total / n_episodes;
  return out;
}

bool is_stable(const Trajectory& traj, const StabilityCriterion& c) {
  if (traj.diverged) return false;
  require(traj.size() > 0 && traj.times.back() + traj.control_period >= c.window_end - 1e-9,
          "is_stable: trajectory does not cover the stability window");
  const double arm = c.arm_box_deg * kDeg;
  const double pend = c.pend_box_deg * kDeg;
  for (std::size_t k = 0; k < traj.size(); ++k) {
    const double t = traj.times[k];
    if (t < c.window_start - 1e-9 || t > c.window_end + 1e-9) continue;
    const auto& s = traj.true_states[k];
    if (std::abs(s.alpha) > arm || std::abs(s.beta) > pend) return false;
  }
  return true;
}

std::string to_string(MarginKind k) { return k == MarginKind::Delay ? "delay" : "gain"; }

MarginKind margin_kind_from_string(const std::string& s) {
  if (s == "delay") return MarginKind::Delay;
  if (s == "gain") return MarginKind::Gain;
  throw std::invalid_argument("unknown margin kind '" + s + "'");
}

MarginGrid MarginGrid::delay_steps(int max_steps) {
  require(max_steps >= 1, "delay grid needs at least one candidate");
  MarginGrid g{MarginKind::Delay, {}};
  for (int d = 1; d <= max_steps; ++d) g.candidates.push_back(d);
  return g;
}

MarginGrid MarginGrid::gain_geometric(int count, double lowest, double highest) {
  require(count >= 1 && lowest > 0.0 && highest <= 1.0 && lowest < highest, "invalid gain grid");
  MarginGrid g{MarginKind::Gain, {}};
  if (count == 1) {
    g.candidates.push_back(lowest);
    return g;
  }
  const double ratio = std::pow(lowest / highest, 1.0 / (count - 1));
  for (int i = 0; i < count; ++i) g.candidates.push_back(i == count - 1 ? lowest : highest * std::pow(ratio, i));
  return g;
}

void MarginGrid::validate() const {
  require(!candidates.empty(), "margin grid must not be empty");
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const double c = candidates[i];
    if (kind == MarginKind::Delay) {
      require(c >= 1.0 && c == std::floor(c), "delay candidates must be whole control steps >= 1");
      if (i > 0) require(c > candidates[i - 1], "delay candidates must increase");
    } else {
      require(c > 0.0 && c < 1.0, "lower gain candidates must lie in (0, 1)");
      if (i > 0) require(c < candidates[i - 1], "gain candidates must decrease");
    }
  }
}

Environment perturbed_environment(const Environment& env, MarginKind kind, double severity) {
  Environment out = env;
  if (kind == MarginKind::Delay) {
    out.perturbation.observation_delay_steps = static_cast<int>(std::lround(severity));
  } else {
    out.perturbation.gain_factor = severity;
  }
  return out;
}

bool stability_probe(const ControllerGains& g, double severity, MarginKind kind, const Environment& env,
                     int n_trials, std::uint64_t seed, int* trials_run) {
  require(n_trials >= 1, "stability_probe: n_trials must be >= 1");
  const Environment probe_env = perturbed_environment(env, kind, severity);
  int run = 0;
  bool stable = true;
  for (int t = 0; t < n_trials && stable; ++t) {
    const std::uint64_t trial_seed = derive_seed(seed, {static_cast<std::uint64_t>(t)});
    ++run;
    try {
      const SimState init = sample_initial_state(probe_env.initial, trial_seed);
      const auto traj = furuta::rollout(g, probe_env.plant, probe_env.observation, probe_env.perturbation,
                                        probe_env.stability.episode_length, init, trial_seed);
      stable = is_stable(traj, probe_env.stability);
    } catch (const NumericalError&) {
      stable = false;
    }
  }
  if (trials_run) *trials_run = run;
  return stable;
}

SearchOutcome binary_search_last_stable(std::size_t m, const std::function<bool(std::size_t)>& probe) {
  // invariant: indices < lo are known stable, indices >= hi known unstable
  std::size_t lo = 0, hi = m;
  SearchOutcome out;
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo) / 2;
    ++out.probes;
    if (probe(mid)) {
      lo = mid + 1;
    } else {
      hi = mid;
    }
  }
  if (lo > 0) out.index = lo - 1;
  return out;
}

MarginEstimate margin_binary_search(const ControllerGains& g, const MarginGrid& grid, const Environment& env,
                                    std::uint64_t seed, int n_trials, const ProbeSink& sink) {
  grid.validate();
  MarginEstimate est;
  {
    // a margin is only meaningful around a nominally stable loop
    const double nominal = grid.kind == MarginKind::Delay ? 0.0 : 1.0;
    const std::uint64_t probe_seed = derive_seed(seed, {kNominalProbeTag});
    int trials = 0;
    const bool verdict = stability_probe(g, nominal, grid.kind, env, n_trials, probe_seed, &trials);
    est.trials += trials;
    ++est.probes;
    if (sink) sink({grid.kind, nominal, verdict, probe_seed, trials});
    if (!verdict) return est;
  }
  const auto outcome = binary_search_last_stable(grid.size(), [&](std::size_t i) {
    const std::uint64_t probe_seed = derive_seed(seed, {static_cast<std::uint64_t>(i)});
    int trials = 0;
    const bool verdict = stability_probe(g, grid.candidates[i], grid.kind, env, n_trials, probe_seed, &trials);
    est.trials += trials;
    if (sink) sink({grid.kind, grid.candidates[i], verdict, probe_seed, trials});
    return verdict;
  });
  est.probes += outcome.probes;
  if (outcome.index) est.raw = grid.candidates[*outcome.index];
  est.normalized = normalize_margin(est.raw, grid);
  return est;
}

double normalize_margin(std::optional<double> raw, const MarginGrid& grid) {
  grid.validate();
  if (!raw) return 0.0;
  double v;
  if (grid.kind == MarginKind::Delay) {
    v = *raw / grid.candidates.back();
  } else {
    v = (1.0 - *raw) / (1.0 - grid.candidates.back());
  }
  return std::clamp(v, 0.0, 1.0);
}

}  // namespace robustpo::eval
