#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "robustpo/evaluation.hpp"
#include "robustpo/gp.hpp"
#include "robustpo/pareto.hpp"
#include "robustpo/types.hpp"

namespace robustpo::opt {

enum class Mode { RobustDelay, RobustGain, Scalar };

std::string to_string(Mode m);
Mode mode_from_string(const std::string& s);

/// Axis-aligned box Theta over the four gains. The default keeps the sign
/// pattern of a stabilizing feedback for the shipped plant.
struct SearchBox {
  Vector4 lower = Vector4::Zero();
  Vector4 upper{10.0, 60.0, 10.0, 20.0};

  void validate() const;
  bool contains(const ControllerGains& g) const;
  ControllerGains from_unit(const Vector4& u) const;
  double diagonal() const { return (upper - lower).norm(); }
  bool operator==(const SearchBox&) const = default;
};

struct Settings {
  Mode mode = Mode::RobustGain;
  int n_init = 5;
  int iterations = 200;  // acquisition-driven steps after the initial design
  int acquisition_budget = 2048;
  int refine_starts = 5;
  int map_restarts = 8;
  int performance_episodes = 10;
  int probe_trials = 5;
  ObjectiveVector reference{0.0, 0.0};
  std::optional<double> stop_threshold;  // stop once max acquisition stays below this
  int stop_patience = 10;

  void validate() const;
  bool operator==(const Settings&) const = default;
};

/// What the optimizer evaluates on: the training environment and margin grids.
struct Problem {
  eval::Environment env;
  eval::MarginGrid delay_grid = eval::MarginGrid::delay_steps(16);
  eval::MarginGrid gain_grid = eval::MarginGrid::gain_geometric(16, 0.2, 0.95);
  SearchBox box;
  gp::Hyperpriors priors;
};

struct AcquisitionResult {
  ControllerGains gains;
  double value = 0.0;
};

using Acquisition = std::function<double(const ControllerGains&)>;

/// Shifted Halton candidates followed by coordinate refinement from the best
/// `refine_starts`. Ties go to the lowest candidate index.
AcquisitionResult maximize_acquisition(const Acquisition& acq, const SearchBox& box, int budget, std::uint64_t seed,
                                       int refine_starts = 5);

/// Latin-hypercube design of n points inside the box.
std::vector<ControllerGains> space_filling_design(const SearchBox& box, int n, std::uint64_t seed);

struct OptimizerState {
  Mode mode = Mode::RobustGain;
  std::uint64_t master_seed = 0;
  gp::Dataset dataset{2};
  std::optional<gp::Hyperparameters> hyper;
  int iteration = 0;  // completed evaluations
  std::vector<std::size_t> pareto_indices;
  pareto::ParetoFront front;
  std::vector<double> hv_trace;           // HV of the data front (robust) or best-so-far return (scalar)
  std::vector<double> acquisition_trace;  // NaN for design points
  int low_acquisition_streak = 0;
  bool stopped = false;
  std::vector<nlohmann::json> last_audit;  // records produced by the latest step

  static OptimizerState initial(Mode mode, std::uint64_t master_seed);
  std::vector<ControllerGains> pareto_set() const;
};

nlohmann::json to_json(const OptimizerState& s);
OptimizerState state_from_json(const nlohmann::json& j);

/// Front/index/HV bookkeeping after the dataset changed.
void refresh_front(OptimizerState& s, const ObjectiveVector& reference);

/// One iteration of robust policy optimization (EHI selection, performance and
/// margin experiments, MAP refit, front update).
OptimizerState robust_po_step(OptimizerState state, const Problem& problem, const Settings& settings);

/// One iteration of the single-objective EI baseline.
OptimizerState scalar_bo_step(OptimizerState state, const Problem& problem, const Settings& settings);

OptimizerState step(OptimizerState state, const Problem& problem, const Settings& settings);

struct RunOptions {
  bool resume = false;
  std::optional<int> stop_after_iteration;  // halt (as if interrupted) once this many evaluations exist
  std::function<void(const OptimizerState&)> on_iteration;
};

struct RunResult {
  OptimizerState state;
  std::vector<ControllerGains> pareto_set;
  pareto::ParetoFront front;
  bool completed = false;
};

/// Runs the design then acquisition steps, checkpointing every iteration into
/// `out_dir/checkpoints` and appending to `out_dir/audit.jsonl`. Final
/// artifacts are written only once the budget is exhausted.
RunResult run(const Problem& problem, const Settings& settings, std::uint64_t master_seed,
              const std::filesystem::path& out_dir, const RunOptions& options = {});

/// Latest checkpoint in `out_dir/checkpoints`, if any. Throws on a corrupt file.
std::optional<OptimizerState> load_latest_checkpoint(const std::filesystem::path& out_dir);

}  // namespace robustpo::opt
