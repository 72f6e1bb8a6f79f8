#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "robustpo/config.hpp"
#include "robustpo/optimizer.hpp"
#include "robustpo/pareto.hpp"

namespace robustpo::harness {

namespace fs = std::filesystem;

struct ScenarioResult {
  std::string name;
  double mean_return = 0.0;     // E[R], rewards averaged up to the end or the failure
  double failure_rate = 0.0;    // percent
  double mean_fail_time = 0.0;  // s, over failing runs only; +inf without failures
  int failures = 0;
  int repeats = 0;
  std::vector<double> returns;
  std::vector<double> fail_times;  // one per failing run
};

struct TestReport {
  std::vector<ScenarioResult> rows;

  int total_failures() const;
  int total_runs() const;
  double aggregate_failure_rate() const;
  /// Mean over every failing run of every scenario; +inf without failures.
  double aggregate_mean_fail_time() const;
};

/// One test run: rollout on `env`, failure at the first step with |beta| above
/// the threshold. Returns the time-averaged reward up to that point.
struct TestRun {
  double ret = 0.0;
  std::optional<double> fail_time;
};
TestRun test_run(const ControllerGains& g, const eval::Environment& env, const config::TestScenario& scenario,
                 double duration, std::uint64_t seed);

/// Every scenario on the nominal plant; run r of scenario s uses seed derive(seed, {test, s, r}).
TestReport run_test_battery(const ControllerGains& g, const eval::Environment& nominal,
                            const config::TestSettings& settings, std::uint64_t seed);

void write_report_csv(std::ostream& os, const TestReport& report);

/// One row of pareto_set.csv.
struct FrontEntry {
  ControllerGains gains;
  ObjectiveVector objectives;
};

std::vector<FrontEntry> read_pareto_set_csv(const fs::path& path);

/// Largest perpendicular distance to the chord between the two extremes.
/// Ties: closer to the chord midpoint, then higher robustness. A two-point
/// front falls back to the higher-robustness point.
std::size_t elbow_index(const std::vector<ObjectiveVector>& front);

enum class Strategy { Elbow, Index };

struct Selection {
  std::size_t index = 0;
  FrontEntry entry;
};

Selection select_controller(const std::vector<FrontEntry>& front, Strategy strategy, std::size_t index = 0);

nlohmann::json to_json(const Selection& s);
ControllerGains read_controller_json(const fs::path& path);

/// Result of re-simulating a front controller for longer than in training.
struct VerificationRow {
  std::size_t index = 0;
  FrontEntry entry;
  bool verified = false;
};

/// Re-checks the claimed margin (or nominal stability in scalar mode) with
/// episodes of verification.duration seconds, judged on the final second.
std::vector<VerificationRow> verify_front(const std::vector<FrontEntry>& front, const config::RunConfig& cfg);

/// HV of the data front after every evaluation, recomputed from a dataset.
std::vector<double> hv_curve(const gp::Dataset& data, const ObjectiveVector& reference);

/// First index where the sequence decreases, if any.
std::optional<std::size_t> first_decrease(const std::vector<double>& values);

/// Files a completed run directory must contain for the given mode.
std::vector<std::string> required_artifacts(opt::Mode mode);
std::vector<std::string> missing_artifacts(const fs::path& run_dir, opt::Mode mode);

/// Command options; the CLI maps flags onto these.
struct CommandOptions {
  std::optional<fs::path> config;
  std::optional<std::uint64_t> seed;
  std::optional<fs::path> out;
  std::optional<opt::Mode> mode;
  bool force = false;
  bool resume = false;
  std::optional<int> stop_after;  // train: stop early, leaving a resumable checkpoint
  std::string strategy = "elbow";
  std::size_t index = 0;
  std::optional<fs::path> controller;
};

/// Each returns a process exit status and writes diagnostics to `err`.
int cmd_train(const CommandOptions& o, std::ostream& out, std::ostream& err);
int cmd_select(const CommandOptions& o, std::ostream& out, std::ostream& err);
int cmd_test(const CommandOptions& o, std::ostream& out, std::ostream& err);
int cmd_export_plots(const CommandOptions& o, std::ostream& out, std::ostream& err);
int cmd_verify_front(const CommandOptions& o, std::ostream& out, std::ostream& err);

/// Config from --config, else <out>/config.json, with --seed/--mode/--out applied.
config::RunConfig resolve_config(const CommandOptions& o);

}  // namespace robustpo::harness
