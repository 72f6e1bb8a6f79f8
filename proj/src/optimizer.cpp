#include "robustpo/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <regex>
#include <sstream>
#include <stdexcept>

#include "robustpo/rng.hpp"

namespace robustpo::opt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

double radical_inverse(std::uint64_t i, std::uint64_t base) {
  double inv = 1.0 / static_cast<double>(base);
  double f = inv, r = 0.0;
  while (i > 0) {
    r += f * static_cast<double>(i % base);
    i /= base;
    f *= inv;
  }
  return r;
}

json gains_json(const ControllerGains& g) { return json::array({g[0], g[1], g[2], g[3]}); }

ControllerGains gains_from_json(const json& j) {
  require(j.is_array() && j.size() == 4, "controller must have 4 gains");
  return ControllerGains(j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>());
}

int outputs_for(Mode m) { return m == Mode::Scalar ? 1 : 2; }

}  // namespace

std::string to_string(Mode m) {
  switch (m) {
    case Mode::RobustDelay:
      return "robust-dm";
    case Mode::RobustGain:
      return "robust-gm";
    case Mode::Scalar:
      return "scalar";
  }
  return "?";
}

Mode mode_from_string(const std::string& s) {
  if (s == "robust-dm") return Mode::RobustDelay;
  if (s == "robust-gm") return Mode::RobustGain;
  if (s == "scalar") return Mode::Scalar;
  throw std::invalid_argument("unknown mode '" + s + "' (expected robust-dm, robust-gm or scalar)");
}

void SearchBox::validate() const {
  require(lower.allFinite() && upper.allFinite(), "search box must be finite");
  require((lower.array() < upper.array()).all(), "search box lower bounds must be below upper bounds");
}

bool SearchBox::contains(const ControllerGains& g) const {
  return (g.theta.array() >= lower.array()).all() && (g.theta.array() <= upper.array()).all();
}

ControllerGains SearchBox::from_unit(const Vector4& u) const {
  return ControllerGains(lower + u.cwiseProduct(upper - lower));
}

void Settings::validate() const {
  require(n_init >= 1, "n_init must be >= 1");
  require(iterations >= 0, "iterations must be >= 0");
  require(acquisition_budget >= 1, "acquisition_budget must be >= 1");
  require(refine_starts >= 0, "refine_starts must be >= 0");
  require(map_restarts >= 1, "map_restarts must be >= 1");
  require(performance_episodes >= 1, "performance_episodes must be >= 1");
  require(probe_trials >= 1, "probe_trials must be >= 1");
  require(stop_patience >= 1, "stop_patience must be >= 1");
}

AcquisitionResult maximize_acquisition(const Acquisition& acq, const SearchBox& box, int budget, std::uint64_t seed,
                                       int refine_starts) {
  require(budget >= 1, "acquisition budget must be >= 1");
  box.validate();
  Rng rng(derive_seed(seed, {stream::kAcquisition}));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Vector4 shift;
  for (int d = 0; d < 4; ++d) shift[d] = unit(rng);
  static constexpr std::uint64_t kBases[4] = {2, 3, 5, 7};

  std::vector<ControllerGains> cands;
  std::vector<double> values;
  cands.reserve(budget);
  values.reserve(budget);
  for (int i = 0; i < budget; ++i) {
    Vector4 u;
    for (int d = 0; d < 4; ++d) {
      const double h = radical_inverse(static_cast<std::uint64_t>(i) + 1, kBases[d]) + shift[d];
      u[d] = h - std::floor(h);
    }
    cands.push_back(box.from_unit(u));
    values.push_back(acq(cands.back()));
  }

  std::vector<std::size_t> order(cands.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });

  AcquisitionResult best{cands[order[0]], values[order[0]]};
  const Vector4 width = box.upper - box.lower;
  const int starts = std::min<int>(refine_starts, static_cast<int>(cands.size()));
  for (int s = 0; s < starts; ++s) {
    ControllerGains x = cands[order[s]];
    double fx = values[order[s]];
    Vector4 step = 0.1 * width;
    for (int round = 0; round < 200 && (step.array() > 1e-5 * width.array()).any(); ++round) {
      bool improved = false;
      for (int d = 0; d < 4; ++d) {
        for (double sign : {1.0, -1.0}) {
          ControllerGains trial = x;
          trial[d] = std::clamp(x[d] + sign * step[d], box.lower[d], box.upper[d]);
          if (trial[d] == x[d]) continue;
          const double ft = acq(trial);
          if (ft > fx) {
            x = trial;
            fx = ft;
            improved = true;
            break;
          }
        }
      }
      if (!improved) step *= 0.5;
    }
    if (fx > best.value) best = {x, fx};
  }
  return best;
}

std::vector<ControllerGains> space_filling_design(const SearchBox& box, int n, std::uint64_t seed) {
  require(n >= 0, "design size must be >= 0");
  Rng rng(derive_seed(seed, {stream::kDesign}));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::array<std::vector<int>, 4> perms;
  for (auto& p : perms) {
    p.resize(n);
    std::iota(p.begin(), p.end(), 0);
    for (int i = n - 1; i > 0; --i) {
      std::uniform_int_distribution<int> pick(0, i);
      std::swap(p[i], p[pick(rng)]);
    }
  }
  std::vector<ControllerGains> out;
  for (int i = 0; i < n; ++i) {
    Vector4 u;
    for (int d = 0; d < 4; ++d) u[d] = (perms[d][i] + unit(rng)) / n;
    out.push_back(box.from_unit(u));
  }
  return out;
}

OptimizerState OptimizerState::initial(Mode mode, std::uint64_t master_seed) {
  OptimizerState s;
  s.mode = mode;
  s.master_seed = master_seed;
  s.dataset = gp::Dataset(outputs_for(mode));
  return s;
}

std::vector<ControllerGains> OptimizerState::pareto_set() const {
  std::vector<ControllerGains> out;
  for (auto i : pareto_indices) out.push_back(dataset.inputs()[i]);
  return out;
}

void refresh_front(OptimizerState& s, const ObjectiveVector& reference) {
  const auto& obs = s.dataset.observations();
  if (s.mode == Mode::Scalar) {
    s.pareto_indices.clear();
    s.front = {};
    if (obs.empty()) return;
    std::size_t best = 0;
    for (std::size_t i = 1; i < obs.size(); ++i)
      if (obs[i][0] > obs[best][0]) best = i;
    s.pareto_indices = {best};
    s.front = pareto::ParetoFront({{obs[best][0], 0.0}});
    return;
  }
  std::vector<ObjectiveVector> ys;
  ys.reserve(obs.size());
  for (const auto& y : obs) ys.push_back({y[0], y[1]});
  auto ex = pareto::pareto_extract_indexed(ys);
  s.front = std::move(ex.front);
  s.pareto_indices = std::move(ex.indices);
  (void)reference;
}

json to_json(const OptimizerState& s) {
  json j;
  j["version"] = 1;
  j["mode"] = to_string(s.mode);
  j["master_seed"] = s.master_seed;
  j["iteration"] = s.iteration;
  json inputs = json::array(), observations = json::array();
  for (std::size_t i = 0; i < s.dataset.size(); ++i) {
    inputs.push_back(gains_json(s.dataset.inputs()[i]));
    const auto& y = s.dataset.observations()[i];
    observations.push_back(std::vector<double>(y.data(), y.data() + y.size()));
  }
  j["dataset"] = {{"inputs", inputs}, {"observations", observations}};
  j["hyperparameters"] = s.hyper ? gp::to_json(*s.hyper) : json(nullptr);
  j["hv_trace"] = s.hv_trace;
  json acq = json::array();
  for (double a : s.acquisition_trace) acq.push_back(std::isfinite(a) ? json(a) : json(nullptr));
  j["acquisition_trace"] = acq;
  j["low_acquisition_streak"] = s.low_acquisition_streak;
  j["stopped"] = s.stopped;
  return j;
}

OptimizerState state_from_json(const json& j) {
  try {
    require(j.at("version").get<int>() == 1, "unsupported checkpoint version");
    OptimizerState s = OptimizerState::initial(mode_from_string(j.at("mode").get<std::string>()),
                                               j.at("master_seed").get<std::uint64_t>());
    s.iteration = j.at("iteration").get<int>();
    const auto& ds = j.at("dataset");
    const auto& inputs = ds.at("inputs");
    const auto& observations = ds.at("observations");
    require(inputs.size() == observations.size(), "checkpoint dataset is ragged");
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const auto y = observations[i].get<std::vector<double>>();
      s.dataset.add(gains_from_json(inputs[i]), Eigen::Map<const Eigen::VectorXd>(y.data(), y.size()));
    }
    require(static_cast<int>(s.dataset.size()) == s.iteration, "checkpoint iteration does not match dataset size");
    if (!j.at("hyperparameters").is_null()) s.hyper = gp::hyperparameters_from_json(j.at("hyperparameters"));
    s.hv_trace = j.at("hv_trace").get<std::vector<double>>();
    for (const auto& a : j.at("acquisition_trace"))
      s.acquisition_trace.push_back(a.is_null() ? std::numeric_limits<double>::quiet_NaN() : a.get<double>());
    s.low_acquisition_streak = j.at("low_acquisition_streak").get<int>();
    s.stopped = j.at("stopped").get<bool>();
    refresh_front(s, {});
    return s;
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("corrupt checkpoint: ") + e.what());
  }
}

namespace {

struct Selection {
  ControllerGains gains;
  double acquisition = std::numeric_limits<double>::quiet_NaN();
  bool from_design = false;
};

gp::FitOptions fit_options(const OptimizerState& s, const Settings& settings, std::uint64_t k) {
  gp::FitOptions fo;
  fo.restarts = settings.map_restarts;
  fo.seed = derive_seed(s.master_seed, {stream::kHyperFit, k});
  fo.learn_coregionalization = s.mode != Mode::Scalar;
  if (s.hyper) {
    fo.initial = *s.hyper;
  } else if (s.mode == Mode::Scalar) {
    gp::Hyperparameters hp = gp::prior_medians(1, gp::Hyperpriors{});
    fo.initial = hp;
  }
  return fo;
}

void refit(OptimizerState& s, const Problem& problem, const Settings& settings, std::uint64_t k) {
  if (static_cast<int>(s.dataset.size()) < settings.n_init) return;
  auto fit = gp::fit_map(s.dataset, problem.priors, fit_options(s, settings, k));
  s.hyper = fit.params;
  if (fit.fell_back)
    s.last_audit.push_back({{"event", "fit_warning"}, {"iteration", k}, {"message", fit.warning}});
}

template <typename AcqFactory>
Selection select_next(const OptimizerState& s, const Problem& problem, const Settings& settings, AcqFactory make_acq) {
  const auto k = s.dataset.size();
  if (static_cast<int>(k) < settings.n_init || !s.hyper) {
    const auto design = space_filling_design(problem.box, settings.n_init, s.master_seed);
    return {design[std::min<std::size_t>(k, design.size() - 1)], std::numeric_limits<double>::quiet_NaN(), true};
  }
  const gp::Model model(s.dataset, *s.hyper);
  const auto res = maximize_acquisition(make_acq(model), problem.box, settings.acquisition_budget,
                                        derive_seed(s.master_seed, {stream::kAcquisition, k}), settings.refine_starts);
  return {res.gains, res.value, false};
}

void track_stopping(OptimizerState& s, const Settings& settings, const Selection& sel) {
  s.acquisition_trace.push_back(sel.acquisition);
  if (!settings.stop_threshold || sel.from_design) return;
  if (sel.acquisition < *settings.stop_threshold) {
    if (++s.low_acquisition_streak >= settings.stop_patience) s.stopped = true;
  } else {
    s.low_acquisition_streak = 0;
  }
}

json evaluation_record(std::uint64_t k, const Selection& sel, const Eigen::VectorXd& y) {
  json rec{{"event", "evaluation"},
           {"iteration", k},
           {"controller", gains_json(sel.gains)},
           {"source", sel.from_design ? "design" : "acquisition"},
           {"performance", y[0]}};
  if (y.size() > 1) rec["robustness"] = y[1];
  if (std::isfinite(sel.acquisition)) rec["acquisition"] = sel.acquisition;
  return rec;
}

}  // namespace

OptimizerState robust_po_step(OptimizerState s, const Problem& problem, const Settings& settings) {
  require(s.mode != Mode::Scalar, "robust_po_step needs a robust mode");
  s.last_audit.clear();
  const std::uint64_t k = s.dataset.size();
  const auto& front = s.front;
  const Selection sel = select_next(s, problem, settings, [&](const gp::Model& model) {
    return [&model, &front, &settings](const ControllerGains& g) {
      return pareto::ehi(model.predict(g), front, settings.reference);
    };
  });

  const bool delay = s.mode == Mode::RobustDelay;
  const auto& grid = delay ? problem.delay_grid : problem.gain_grid;
  Eigen::VectorXd y(2);
  try {
    const auto perf = eval::performance_estimate(sel.gains, problem.env, settings.performance_episodes,
                                                 derive_seed(s.master_seed, {stream::kPerformance, k}));
    const auto sink = [&](const eval::ProbeRecord& r) {
      s.last_audit.push_back({{"event", "probe"},
                              {"iteration", k},
                              {"controller", gains_json(sel.gains)},
                              {"kind", eval::to_string(r.kind)},
                              {"severity", r.severity},
                              {"verdict", r.verdict},
                              {"seed", r.seed},
                              {"trials", r.trials}});
    };
    const auto margin =
        eval::margin_binary_search(sel.gains, grid, problem.env,
                                   derive_seed(s.master_seed, {delay ? stream::kDelayProbe : stream::kGainProbe, k}),
                                   settings.probe_trials, sink);
    y << perf.scaled, margin.normalized;
  } catch (const std::exception& e) {
    s.last_audit.push_back({{"event", "experiment_error"}, {"iteration", k}, {"message", e.what()}});
    y << 0.0, 0.0;
  }
  if (!y.allFinite()) y << 0.0, 0.0;
  y = y.cwiseMax(0.0).cwiseMin(1.0);

  s.dataset.add(sel.gains, y);
  s.last_audit.push_back(evaluation_record(k, sel, y));
  track_stopping(s, settings, sel);
  refit(s, problem, settings, k);
  refresh_front(s, settings.reference);
  s.hv_trace.push_back(pareto::hypervolume_2d(s.front, settings.reference));
  s.iteration = static_cast<int>(s.dataset.size());
  return s;
}

OptimizerState scalar_bo_step(OptimizerState s, const Problem& problem, const Settings& settings) {
  require(s.mode == Mode::Scalar, "scalar_bo_step needs scalar mode");
  s.last_audit.clear();
  const std::uint64_t k = s.dataset.size();
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& y : s.dataset.observations()) best = std::max(best, y[0]);
  const Selection sel = select_next(s, problem, settings, [&](const gp::Model& model) {
    return [&model, best](const ControllerGains& g) {
      const auto post = model.predict(g);
      return pareto::ei(post.mean[0], std::sqrt(std::max(post.covariance(0, 0), 0.0)), best);
    };
  });

  Eigen::VectorXd y(1);
  try {
    y[0] = eval::performance_estimate(sel.gains, problem.env, settings.performance_episodes,
                                      derive_seed(s.master_seed, {stream::kPerformance, k}))
               .scaled;
  } catch (const std::exception& e) {
    s.last_audit.push_back({{"event", "experiment_error"}, {"iteration", k}, {"message", e.what()}});
    y[0] = 0.0;
  }
  if (!std::isfinite(y[0])) y[0] = 0.0;
  y[0] = std::clamp(y[0], 0.0, 1.0);

  s.dataset.add(sel.gains, y);
  s.last_audit.push_back(evaluation_record(k, sel, y));
  track_stopping(s, settings, sel);
  refit(s, problem, settings, k);
  refresh_front(s, settings.reference);
  s.hv_trace.push_back(s.front[0].performance);
  s.iteration = static_cast<int>(s.dataset.size());
  return s;
}

OptimizerState step(OptimizerState state, const Problem& problem, const Settings& settings) {
  if (state.mode == Mode::Scalar) return scalar_bo_step(std::move(state), problem, settings);
  return robust_po_step(std::move(state), problem, settings);
}

namespace {

const std::regex kCheckpointName(R"(iter_(\d+)\.json)");

fs::path checkpoint_path(const fs::path& dir, int iteration) {
  char name[32];
  std::snprintf(name, sizeof name, "iter_%05d.json", iteration);
  return dir / "checkpoints" / name;
}

void write_atomically(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + tmp.string());
    os << content;
  }
  fs::rename(tmp, path);
}

void write_outputs(const fs::path& dir, const OptimizerState& s) {
  {
    std::ostringstream os;
    pareto::write_front_csv(os, s.front);
    if (s.mode == Mode::Scalar) {
      os.str("");
      os.precision(17);
      os << "performance\n" << s.front[0].performance << '\n';
    }
    write_atomically(dir / "pareto_front.csv", os.str());
  }
  {
    std::ostringstream os;
    os.precision(17);
    os << "theta1,theta2,theta3,theta4,performance" << (s.mode == Mode::Scalar ? "" : ",robustness") << '\n';
    for (auto i : s.pareto_indices) {
      const auto& g = s.dataset.inputs()[i];
      const auto& y = s.dataset.observations()[i];
      os << g[0] << ',' << g[1] << ',' << g[2] << ',' << g[3] << ',' << y[0];
      if (y.size() > 1) os << ',' << y[1];
      os << '\n';
    }
    write_atomically(dir / "pareto_set.csv", os.str());
  }
  {
    std::ostringstream os;
    os.precision(17);
    if (s.mode == Mode::Scalar) {
      os << "best_return\n";
      for (double v : s.hv_trace) os << v << '\n';
      write_atomically(dir / "best_return.csv", os.str());
    } else {
      os << "iteration,hypervolume\n";
      for (std::size_t i = 0; i < s.hv_trace.size(); ++i) os << i + 1 << ',' << s.hv_trace[i] << '\n';
      write_atomically(dir / "hv_trace.csv", os.str());
    }
  }
}

// Drops audit lines written by iterations the checkpoint does not cover.
void truncate_audit(const fs::path& audit, int keep_below) {
  if (!fs::exists(audit)) return;
  std::ifstream is(audit);
  std::string line, kept;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto rec = json::parse(line, nullptr, false);
    if (rec.is_discarded()) continue;
    if (rec.contains("iteration") && rec["iteration"].get<int>() >= keep_below) continue;
    kept += line + '\n';
  }
  is.close();
  write_atomically(audit, kept);
}

}  // namespace

std::optional<OptimizerState> load_latest_checkpoint(const fs::path& out_dir) {
  const fs::path dir = out_dir / "checkpoints";
  if (!fs::is_directory(dir)) return std::nullopt;
  int latest = -1;
  fs::path latest_path;
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (std::regex_match(name, m, kCheckpointName)) {
      const int it = std::stoi(m[1]);
      if (it > latest) {
        latest = it;
        latest_path = entry.path();
      }
    }
  }
  if (latest < 0) return std::nullopt;
  std::ifstream is(latest_path);
  const json j = json::parse(is, nullptr, false);
  if (j.is_discarded()) throw std::runtime_error("cannot resume: checkpoint " + latest_path.string() + " is not valid JSON");
  try {
    return state_from_json(j);
  } catch (const std::exception& e) {
    throw std::runtime_error("cannot resume from " + latest_path.string() + ": " + e.what());
  }
}

RunResult run(const Problem& problem, const Settings& settings, std::uint64_t master_seed, const fs::path& out_dir,
              const RunOptions& options) {
  settings.validate();
  problem.box.validate();
  problem.delay_grid.validate();
  problem.gain_grid.validate();
  fs::create_directories(out_dir / "checkpoints");
  const fs::path audit_path = out_dir / "audit.jsonl";

  OptimizerState state = OptimizerState::initial(settings.mode, master_seed);
  if (options.resume) {
    if (auto loaded = load_latest_checkpoint(out_dir)) {
      state = std::move(*loaded);
      if (state.mode != settings.mode || state.master_seed != master_seed)
        throw std::runtime_error("cannot resume: checkpoint mode/seed differ from the configuration");
    }
    truncate_audit(audit_path, state.iteration);
  } else {
    std::ofstream(audit_path, std::ios::trunc);
  }

  const int total = settings.n_init + settings.iterations;
  RunResult result;
  while (!state.stopped && state.iteration < total) {
    if (options.stop_after_iteration && state.iteration >= *options.stop_after_iteration) {
      result.state = state;
      result.pareto_set = state.pareto_set();
      result.front = state.front;
      return result;
    }
    state = step(std::move(state), problem, settings);
    {
      std::ofstream audit(audit_path, std::ios::app);
      for (const auto& rec : state.last_audit) audit << rec.dump() << '\n';
    }
    write_atomically(checkpoint_path(out_dir, state.iteration), to_json(state).dump());
    if (options.on_iteration) options.on_iteration(state);
  }
  write_outputs(out_dir, state);
  result.state = state;
  result.pareto_set = state.pareto_set();
  result.front = state.front;
  result.completed = true;
  return result;
}

}  // namespace robustpo::opt
