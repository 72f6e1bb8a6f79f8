#include "robustpo/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "robustpo/rng.hpp"

namespace robustpo::harness {

using nlohmann::json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kDeg = std::numbers::pi / 180.0;

std::string read_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + p.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

/// Writes `content` unless a different file is already there and force is off.
void write_output(const fs::path& p, const std::string& content, bool force) {
  if (fs::exists(p) && !force && read_file(p) != content)
    throw std::runtime_error(p.string() + " already exists with different content (use --force to overwrite)");
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  os << content;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, sep)) out.push_back(cell);
  return out;
}

fs::path run_dir(const CommandOptions& o, const config::RunConfig& cfg) {
  return o.out ? *o.out : fs::path(cfg.output_dir);
}

std::string fmt(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

int TestReport::total_failures() const {
  int n = 0;
  for (const auto& r : rows) n += r.failures;
  return n;
}

int TestReport::total_runs() const {
  int n = 0;
  for (const auto& r : rows) n += r.repeats;
  return n;
}

double TestReport::aggregate_failure_rate() const {
  const int runs = total_runs();
  return runs == 0 ? 0.0 : 100.0 * total_failures() / runs;
}

double TestReport::aggregate_mean_fail_time() const {
  double sum = 0.0;
  int n = 0;
  for (const auto& r : rows)
    for (double t : r.fail_times) {
      sum += t;
      ++n;
    }
  return n == 0 ? kInf : sum / n;
}

TestRun test_run(const ControllerGains& g, const eval::Environment& env, const config::TestScenario& scenario,
                 double duration, std::uint64_t seed) {
  const auto init = eval::sample_initial_state(env.initial, seed);
  const auto traj = furuta::rollout(g, env.plant, env.observation, scenario.perturbation, duration, init, seed);
  const double threshold = scenario.failure_threshold_deg * kDeg;
  TestRun out;
  std::size_t end = traj.size();
  for (std::size_t k = 0; k < traj.size(); ++k) {
    if (std::abs(traj.true_states[k].beta) > threshold) {
      out.fail_time = traj.times[k];
      end = k;
      break;
    }
  }
  if (!out.fail_time && traj.diverged) {
    out.fail_time = traj.size() * traj.control_period;
  }
  end = std::max<std::size_t>(end, 1);
  double sum = 0.0;
  for (std::size_t k = 0; k < end && k < traj.size(); ++k)
    sum += eval::reward(traj.true_states[k], traj.voltages[k], env.reward);
  out.ret = sum / static_cast<double>(std::min(end, traj.size()));
  return out;
}

TestReport run_test_battery(const ControllerGains& g, const eval::Environment& nominal,
                            const config::TestSettings& settings, std::uint64_t seed) {
  TestReport report;
  for (std::size_t s = 0; s < settings.scenarios.size(); ++s) {
    const auto& sc = settings.scenarios[s];
    if (sc.n_repeats < 1) throw std::invalid_argument("scenario '" + sc.name + "' needs n_repeats >= 1");
    ScenarioResult row;
    row.name = sc.name;
    row.repeats = sc.n_repeats;
    double total = 0.0;
    for (int r = 0; r < sc.n_repeats; ++r) {
      const auto run = test_run(g, nominal, sc, settings.duration,
                                derive_seed(seed, {stream::kTest, s, static_cast<std::uint64_t>(r)}));
      row.returns.push_back(run.ret);
      total += run.ret;
      if (run.fail_time) {
        ++row.failures;
        row.fail_times.push_back(*run.fail_time);
      }
    }
    row.mean_return = total / sc.n_repeats;
    row.failure_rate = 100.0 * row.failures / sc.n_repeats;
    double ft = 0.0;
    for (double t : row.fail_times) ft += t;
    row.mean_fail_time = row.fail_times.empty() ? kInf : ft / row.fail_times.size();
    report.rows.push_back(std::move(row));
  }
  return report;
}

void write_report_csv(std::ostream& os, const TestReport& report) {
  os << "scenario,mean_return,failure_rate,mean_fail_time,failures,repeats\n";
  for (const auto& r : report.rows)
    os << r.name << ',' << fmt(r.mean_return) << ',' << fmt(r.failure_rate) << ',' << fmt(r.mean_fail_time) << ','
       << r.failures << ',' << r.repeats << '\n';
  os << "aggregate,," << fmt(report.aggregate_failure_rate()) << ',' << fmt(report.aggregate_mean_fail_time()) << ','
     << report.total_failures() << ',' << report.total_runs() << '\n';
}

std::vector<FrontEntry> read_pareto_set_csv(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  std::getline(is, line);
  std::vector<FrontEntry> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != 5 && cells.size() != 6) throw std::runtime_error("malformed row in " + path.string());
    FrontEntry e;
    for (int d = 0; d < 4; ++d) e.gains[d] = std::stod(cells[d]);
    e.objectives.performance = std::stod(cells[4]);
    e.objectives.robustness = cells.size() == 6 ? std::stod(cells[5]) : 0.0;
    out.push_back(e);
  }
  return out;
}

std::size_t elbow_index(const std::vector<ObjectiveVector>& front) {
  if (front.empty()) throw std::invalid_argument("cannot select from an empty front");
  if (front.size() == 1) return 0;
  const auto higher_robustness = [&](std::size_t a, std::size_t b) {
    return front[a].robustness >= front[b].robustness ? a : b;
  };
  if (front.size() == 2) return higher_robustness(0, 1);

  const ObjectiveVector& a = front.front();
  const ObjectiveVector& b = front.back();
  const double dx = b.performance - a.performance;
  const double dy = b.robustness - a.robustness;
  const double len = std::hypot(dx, dy);
  const double mx = 0.5 * (a.performance + b.performance);
  const double my = 0.5 * (a.robustness + b.robustness);
  const auto distance = [&](const ObjectiveVector& p) {
    if (len == 0.0) return 0.0;
    return std::abs(dy * (p.performance - a.performance) - dx * (p.robustness - a.robustness)) / len;
  };
  const auto to_mid = [&](const ObjectiveVector& p) { return std::hypot(p.performance - mx, p.robustness - my); };

  constexpr double kTol = 1e-12;
  std::size_t best = 0;
  for (std::size_t i = 1; i < front.size(); ++i) {
    const double di = distance(front[i]), db = distance(front[best]);
    if (di > db + kTol) {
      best = i;
    } else if (di >= db - kTol) {
      const double mi = to_mid(front[i]), mb = to_mid(front[best]);
      if (mi < mb - kTol || (mi <= mb + kTol && front[i].robustness > front[best].robustness)) best = i;
    }
  }
  return best;
}

Selection select_controller(const std::vector<FrontEntry>& front, Strategy strategy, std::size_t index) {
  if (front.empty()) throw std::invalid_argument("cannot select from an empty front");
  Selection s;
  if (strategy == Strategy::Index) {
    if (index >= front.size())
      throw std::invalid_argument("index " + std::to_string(index) + " out of range for a front of " +
                                  std::to_string(front.size()) + " points");
    s.index = index;
  } else {
    std::vector<ObjectiveVector> ys;
    for (const auto& e : front) ys.push_back(e.objectives);
    s.index = elbow_index(ys);
  }
  s.entry = front[s.index];
  return s;
}

json to_json(const Selection& s) {
  const auto& g = s.entry.gains;
  return {{"index", s.index},
          {"controller", {g[0], g[1], g[2], g[3]}},
          {"performance", s.entry.objectives.performance},
          {"robustness", s.entry.objectives.robustness}};
}

ControllerGains read_controller_json(const fs::path& path) {
  const json j = json::parse(read_file(path), nullptr, false);
  if (j.is_discarded()) throw std::runtime_error(path.string() + " is not valid JSON");
  const json& c = j.is_array() ? j : j.value("controller", json());
  if (!c.is_array() || c.size() != 4) throw std::runtime_error(path.string() + ": expected a 4-gain 'controller'");
  ControllerGains g;
  for (int d = 0; d < 4; ++d) {
    if (!c[d].is_number()) throw std::runtime_error(path.string() + ": controller gains must be numbers");
    g[d] = c[d].get<double>();
  }
  return g;
}

std::vector<VerificationRow> verify_front(const std::vector<FrontEntry>& front, const config::RunConfig& cfg) {
  eval::Environment env = cfg.training_environment();
  env.stability.episode_length = cfg.verification.duration;
  env.stability.window_end = cfg.verification.duration;
  env.stability.window_start = cfg.verification.duration - 1.0;

  const bool scalar = cfg.mode == opt::Mode::Scalar;
  const eval::MarginGrid grid = cfg.mode == opt::Mode::RobustDelay ? cfg.grids.delay() : cfg.grids.gain();
  std::vector<VerificationRow> rows;
  for (std::size_t i = 0; i < front.size(); ++i) {
    VerificationRow row{i, front[i], false};
    const ControllerGains& g = front[i].gains;
    const double nominal = grid.kind == eval::MarginKind::Delay ? 0.0 : 1.0;
    bool ok = eval::stability_probe(g, nominal, grid.kind, env, cfg.verification.trials,
                                    derive_seed(cfg.seed, {stream::kVerify, i, 0}));
    const double claimed = front[i].objectives.robustness;
    if (ok && !scalar && claimed > 0.0) {
      // the grid candidate whose normalized value matches the claim
      std::optional<double> severity;
      for (double c : grid.candidates)
        if (std::abs(eval::normalize_margin(c, grid) - claimed) < 1e-9) severity = c;
      if (severity) {
        ok = eval::stability_probe(g, *severity, grid.kind, env, cfg.verification.trials,
                                   derive_seed(cfg.seed, {stream::kVerify, i, 1}));
      }
    }
    row.verified = ok;
    rows.push_back(row);
  }
  return rows;
}

std::vector<double> hv_curve(const gp::Dataset& data, const ObjectiveVector& reference) {
  std::vector<double> out;
  std::vector<ObjectiveVector> ys;
  for (const auto& y : data.observations()) {
    ys.push_back({y[0], y.size() > 1 ? y[1] : 0.0});
    out.push_back(pareto::hypervolume_2d(pareto::pareto_extract(ys), reference));
  }
  return out;
}

std::optional<std::size_t> first_decrease(const std::vector<double>& values) {
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] < values[i - 1]) return i;
  return std::nullopt;
}

std::vector<std::string> required_artifacts(opt::Mode mode) {
  std::vector<std::string> out{"pareto_front.csv", "pareto_set.csv", "audit.jsonl", "config.json"};
  out.push_back(mode == opt::Mode::Scalar ? "best_return.csv" : "hv_trace.csv");
  return out;
}

std::vector<std::string> missing_artifacts(const fs::path& dir, opt::Mode mode) {
  std::vector<std::string> out;
  for (const auto& f : required_artifacts(mode))
    if (!fs::exists(dir / f)) out.push_back(f);
  return out;
}

config::RunConfig resolve_config(const CommandOptions& o) {
  config::RunConfig cfg;
  if (o.config) {
    cfg = config::load(*o.config);
  } else if (o.out && fs::exists(*o.out / "config.json")) {
    cfg = config::load(*o.out / "config.json");
  }
  if (o.seed) cfg.seed = *o.seed;
  if (o.mode) cfg.mode = *o.mode;
  if (o.out) cfg.output_dir = o.out->string();
  cfg.optimizer.mode = cfg.mode;
  cfg.validate();
  return cfg;
}

namespace {

int export_plots(const fs::path& dir, const config::RunConfig& cfg, bool force, std::ostream& out,
                 std::ostream& err) {
  const auto missing = missing_artifacts(dir, cfg.mode);
  if (!missing.empty()) {
    err << "error: run directory " << dir.string() << " is missing:";
    for (const auto& m : missing) err << ' ' << m;
    err << '\n';
    return 2;
  }
  const auto state = opt::load_latest_checkpoint(dir);
  if (!state) {
    err << "error: run directory " << dir.string() << " is missing: checkpoints/\n";
    return 2;
  }
  std::vector<bool> discarded(state->dataset.size(), false);
  const fs::path verification = dir / "verification.csv";
  if (fs::exists(verification)) {
    std::ifstream is(verification);
    std::string line;
    std::getline(is, line);
    while (std::getline(is, line)) {
      const auto cells = split(line, ',');
      if (cells.size() < 2) continue;
      const auto i = std::stoul(cells[0]);
      if (i < state->pareto_indices.size() && cells.back() == "true") discarded[state->pareto_indices[i]] = true;
    }
  }
  std::vector<bool> on_front(state->dataset.size(), false);
  for (auto i : state->pareto_indices) on_front[i] = true;

  std::ostringstream scatter;
  scatter.precision(17);
  scatter << "iteration,theta1,theta2,theta3,theta4,performance,robustness,on_front,discarded\n";
  for (std::size_t i = 0; i < state->dataset.size(); ++i) {
    const auto& g = state->dataset.inputs()[i];
    const auto& y = state->dataset.observations()[i];
    scatter << i + 1 << ',' << g[0] << ',' << g[1] << ',' << g[2] << ',' << g[3] << ',' << y[0] << ','
            << (y.size() > 1 ? y[1] : 0.0) << ',' << (on_front[i] ? "true" : "false") << ','
            << (discarded[i] ? "true" : "false") << '\n';
  }

  const bool scalar = cfg.mode == opt::Mode::Scalar;
  std::vector<double> curve;
  if (scalar) {
    double best = -kInf;
    for (const auto& y : state->dataset.observations()) curve.push_back(best = std::max(best, y[0]));
  } else {
    curve = hv_curve(state->dataset, cfg.optimizer.reference);
  }
  if (curve.size() != state->hv_trace.size()) {
    err << "error: trace length " << state->hv_trace.size() << " does not match " << curve.size()
        << " evaluations\n";
    return 3;
  }
  for (std::size_t i = 0; i < curve.size(); ++i) {
    if (std::abs(curve[i] - state->hv_trace[i]) > 1e-12) {
      err << "error: logged trace differs from the recomputed one at iteration " << i + 1 << '\n';
      return 3;
    }
  }
  if (const auto bad = first_decrease(curve)) {
    err << "error: " << (scalar ? "best return" : "hypervolume") << " decreased at iteration " << *bad + 1 << '\n';
    return 3;
  }
  std::ostringstream hv;
  hv.precision(17);
  hv << "iteration," << (scalar ? "best_return" : "hypervolume") << '\n';
  for (std::size_t i = 0; i < curve.size(); ++i) hv << i + 1 << ',' << curve[i] << '\n';

  write_output(dir / "plots" / "front_scatter.csv", scatter.str(), force);
  write_output(dir / "plots" / (scalar ? "best_return_curve.csv" : "hv_curve.csv"), hv.str(), force);
  out << "wrote " << (dir / "plots").string() << " (" << curve.size() << " iterations, "
      << (scalar ? "best return" : "hypervolume") << " nondecreasing)\n";
  return 0;
}

template <typename F>
int guarded(std::ostream& err, F&& f) {
  try {
    return f();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace

int cmd_train(const CommandOptions& o, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const config::RunConfig cfg = resolve_config(o);
    const fs::path dir = cfg.output_dir;
    const bool nonempty = fs::exists(dir) && fs::is_directory(dir) && !fs::is_empty(dir);
    if (fs::exists(dir) && !fs::is_directory(dir)) throw std::runtime_error(dir.string() + " is not a directory");
    if (nonempty && !o.resume) {
      if (!o.force)
        throw std::runtime_error("output directory " + dir.string() +
                                 " is not empty (use --force to overwrite or --resume to continue)");
      fs::remove_all(dir);
    }
    fs::create_directories(dir);
    const fs::path saved = dir / "config.json";
    if (o.resume && fs::exists(saved)) {
      if (!(config::load(saved) == cfg))
        throw std::runtime_error("cannot resume: configuration differs from " + saved.string());
    } else {
      config::save(cfg, saved);
    }
    opt::RunOptions ro;
    ro.resume = o.resume;
    ro.stop_after_iteration = o.stop_after;
    const auto result = opt::run(cfg.problem(), cfg.settings(), cfg.seed, dir, ro);
    if (!result.completed) {
      out << "stopped after " << result.state.iteration << " evaluations; resume with --resume\n";
      return 0;
    }
    out << "trained " << opt::to_string(cfg.mode) << " for " << result.state.iteration << " evaluations; front has "
        << result.front.size() << " point(s)\n";
    return export_plots(dir, cfg, true, out, err);
  });
}

int cmd_select(const CommandOptions& o, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const config::RunConfig cfg = resolve_config(o);
    const fs::path dir = run_dir(o, cfg);
    const fs::path set_path = dir / "pareto_set.csv";
    if (!fs::exists(set_path)) throw std::runtime_error("run directory " + dir.string() + " is missing: pareto_set.csv");
    auto front = read_pareto_set_csv(set_path);
    std::vector<std::size_t> original(front.size());
    for (std::size_t i = 0; i < front.size(); ++i) original[i] = i;
    // controllers ruled out by verify-front are not candidates
    const fs::path verification = dir / "verification.csv";
    if (fs::exists(verification)) {
      std::vector<bool> drop(front.size(), false);
      std::ifstream is(verification);
      std::string line;
      std::getline(is, line);
      while (std::getline(is, line)) {
        const auto cells = split(line, ',');
        if (cells.size() < 2) continue;
        const auto i = std::stoul(cells[0]);
        if (i < drop.size() && cells.back() == "true") drop[i] = true;
      }
      std::vector<FrontEntry> kept;
      std::vector<std::size_t> kept_idx;
      for (std::size_t i = 0; i < front.size(); ++i)
        if (!drop[i]) {
          kept.push_back(front[i]);
          kept_idx.push_back(i);
        }
      if (!kept.empty()) {
        front = std::move(kept);
        original = std::move(kept_idx);
      }
    }
    Strategy strategy;
    if (o.strategy == "elbow") {
      strategy = Strategy::Elbow;
    } else if (o.strategy == "index") {
      strategy = Strategy::Index;
    } else {
      throw std::invalid_argument("unknown strategy '" + o.strategy + "' (expected elbow or index)");
    }
    Selection sel = select_controller(front, strategy, o.index);
    sel.index = original[sel.index];
    write_output(dir / "selected.json", to_json(sel).dump(2) + "\n", o.force);
    const auto& g = sel.entry.gains;
    out << "selected index " << sel.index << ": performance=" << sel.entry.objectives.performance
        << " robustness=" << sel.entry.objectives.robustness << " controller=[" << g[0] << ", " << g[1] << ", " << g[2]
        << ", " << g[3] << "]\n";
    return 0;
  });
}

int cmd_test(const CommandOptions& o, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const config::RunConfig cfg = resolve_config(o);
    const fs::path dir = run_dir(o, cfg);
    const fs::path controller = o.controller ? *o.controller : dir / "selected.json";
    const ControllerGains g = read_controller_json(controller);
    const TestReport report = run_test_battery(g, cfg.nominal_environment(), cfg.test, cfg.seed);
    std::ostringstream csv;
    write_report_csv(csv, report);
    write_output(dir / "test_report.csv", csv.str(), o.force);
    out << csv.str();
    return 0;
  });
}

int cmd_export_plots(const CommandOptions& o, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    CommandOptions local = o;
    config::RunConfig cfg;
    const fs::path dir = o.out ? *o.out : fs::path(o.config ? config::load(*o.config).output_dir : "run");
    if (!fs::exists(dir / "config.json")) {
      const auto missing = missing_artifacts(dir, o.mode.value_or(opt::Mode::RobustGain));
      err << "error: run directory " << dir.string() << " is missing:";
      for (const auto& m : missing) err << ' ' << m;
      err << '\n';
      return 2;
    }
    local.config = dir / "config.json";
    cfg = resolve_config(local);
    return export_plots(dir, cfg, o.force, out, err);
  });
}

int cmd_verify_front(const CommandOptions& o, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const config::RunConfig cfg = resolve_config(o);
    const fs::path dir = run_dir(o, cfg);
    const fs::path set_path = dir / "pareto_set.csv";
    if (!fs::exists(set_path)) throw std::runtime_error("run directory " + dir.string() + " is missing: pareto_set.csv");
    const auto front = read_pareto_set_csv(set_path);
    const auto rows = verify_front(front, cfg);
    std::ostringstream csv;
    csv.precision(17);
    csv << "index,performance,robustness,discarded\n";
    int discarded = 0;
    for (const auto& r : rows) {
      csv << r.index << ',' << r.entry.objectives.performance << ',' << r.entry.objectives.robustness << ','
          << (r.verified ? "false" : "true") << '\n';
      if (!r.verified) ++discarded;
    }
    write_output(dir / "verification.csv", csv.str(), o.force);
    out << "verified " << rows.size() - discarded << " of " << rows.size() << " front controllers; " << discarded
        << " discarded\n";
    return 0;
  });
}

}  // namespace robustpo::harness
