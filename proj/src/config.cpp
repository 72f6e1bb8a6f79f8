#include "robustpo/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace robustpo::config {

using nlohmann::json;

namespace {

std::string join(const std::string& prefix, const std::string& key) { return prefix.empty() ? key : prefix + "." + key; }

void check(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw ConfigError("config: '" + key + "' " + what);
}

/// Strict view of one JSON object: remembers which keys were consumed so the
/// leftovers can be reported.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    check(j_.is_object(), path_.empty() ? "<root>" : path_, "must be a JSON object");
  }

  std::string key(const std::string& k) const { return join(path_, k); }

  const json* find(const std::string& k) {
    seen_.insert(k);
    auto it = j_.find(k);
    return it == j_.end() ? nullptr : &*it;
  }

  void get(const std::string& k, double& out) {
    if (auto v = find(k)) {
      check(v->is_number(), key(k), "must be a number");
      out = v->get<double>();
      check(std::isfinite(out), key(k), "must be finite");
    }
  }
  void get(const std::string& k, int& out) {
    if (auto v = find(k)) {
      check(v->is_number_integer(), key(k), "must be an integer");
      out = v->get<int>();
    }
  }
  void get(const std::string& k, std::uint64_t& out) {
    if (auto v = find(k)) {
      check(v->is_number_unsigned() || (v->is_number_integer() && v->get<std::int64_t>() >= 0), key(k),
            "must be a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }
  void get(const std::string& k, bool& out) {
    if (auto v = find(k)) {
      check(v->is_boolean(), key(k), "must be true or false");
      out = v->get<bool>();
    }
  }
  void get(const std::string& k, std::string& out) {
    if (auto v = find(k)) {
      check(v->is_string(), key(k), "must be a string");
      out = v->get<std::string>();
    }
  }
  template <std::size_t N>
  void get_array(const std::string& k, double* out) {
    if (auto v = find(k)) {
      check(v->is_array() && v->size() == N, key(k), "must be an array of " + std::to_string(N) + " numbers");
      for (std::size_t i = 0; i < N; ++i) {
        check((*v)[i].is_number(), key(k), "must contain only numbers");
        out[i] = (*v)[i].get<double>();
        check(std::isfinite(out[i]), key(k), "must contain finite numbers");
      }
    }
  }
  void get(const std::string& k, Vector4& out) { get_array<4>(k, out.data()); }
  void get(const std::string& k, std::optional<double>& out) {
    if (auto v = find(k)) {
      if (v->is_null()) {
        out.reset();
        return;
      }
      double x = 0.0;
      seen_.erase(k);
      get(k, x);
      out = x;
    }
  }

  Section child(const std::string& k) {
    static const json kEmpty = json::object();
    auto v = find(k);
    return Section(v ? *v : kEmpty, key(k));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError("config: unknown key '" + key(it.key()) + "'");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read(Section s, furuta::PhysicalParams& p) {
  s.get("arm_mass", p.arm_mass);
  s.get("arm_length", p.arm_length);
  s.get("pendulum_mass", p.pendulum_mass);
  s.get("pendulum_length", p.pendulum_length);
  s.get("arm_damping", p.arm_damping);
  s.get("pendulum_damping", p.pendulum_damping);
  s.get("motor_resistance", p.motor_resistance);
  s.get("motor_torque_constant", p.motor_torque_constant);
  s.get("motor_back_emf_constant", p.motor_back_emf_constant);
  s.get("gravity", p.gravity);
  s.get("voltage_limit", p.voltage_limit);
  s.get("added_tip_mass", p.added_tip_mass);
  s.get("added_length", p.added_length);
  s.finish();
}

json write(const furuta::PhysicalParams& p) {
  return {{"arm_mass", p.arm_mass},
          {"arm_length", p.arm_length},
          {"pendulum_mass", p.pendulum_mass},
          {"pendulum_length", p.pendulum_length},
          {"arm_damping", p.arm_damping},
          {"pendulum_damping", p.pendulum_damping},
          {"motor_resistance", p.motor_resistance},
          {"motor_torque_constant", p.motor_torque_constant},
          {"motor_back_emf_constant", p.motor_back_emf_constant},
          {"gravity", p.gravity},
          {"voltage_limit", p.voltage_limit},
          {"added_tip_mass", p.added_tip_mass},
          {"added_length", p.added_length}};
}

void read(Section s, furuta::ObservationConfig& c) {
  s.get("encoder_counts_per_rev", c.encoder_counts_per_rev);
  s.get("control_period", c.control_period);
  s.get("substeps", c.substeps);
  s.get("filter_coefficient", c.filter_coefficient);
  s.get_array<9>("sensor_noise_probs", c.sensor_noise_probs.data());
  s.get("actuation_noise_std", c.actuation_noise_std);
  s.finish();
}

json write(const furuta::ObservationConfig& c) {
  return {{"encoder_counts_per_rev", c.encoder_counts_per_rev},
          {"control_period", c.control_period},
          {"substeps", c.substeps},
          {"filter_coefficient", c.filter_coefficient},
          {"sensor_noise_probs", c.sensor_noise_probs},
          {"actuation_noise_std", c.actuation_noise_std}};
}

void read(Section s, furuta::PerturbationConfig& p) {
  s.get("gain_factor", p.gain_factor);
  s.get("observation_delay_steps", p.observation_delay_steps);
  s.get("mass_delta", p.mass_delta);
  s.get("length_delta", p.length_delta);
  s.get("actuation_noise", p.actuation_noise);
  s.get("sensor_noise", p.sensor_noise);
  s.finish();
}

json write(const furuta::PerturbationConfig& p) {
  return {{"gain_factor", p.gain_factor},
          {"observation_delay_steps", p.observation_delay_steps},
          {"mass_delta", p.mass_delta},
          {"length_delta", p.length_delta},
          {"actuation_noise", p.actuation_noise},
          {"sensor_noise", p.sensor_noise}};
}

void read(Section s, opt::Settings& o) {
  s.get("n_init", o.n_init);
  s.get("iterations", o.iterations);
  s.get("acquisition_budget", o.acquisition_budget);
  s.get("refine_starts", o.refine_starts);
  s.get("map_restarts", o.map_restarts);
  s.get("performance_episodes", o.performance_episodes);
  s.get("probe_trials", o.probe_trials);
  if (auto v = s.find("reference")) {
    check(v->is_array() && v->size() == 2 && (*v)[0].is_number() && (*v)[1].is_number(), s.key("reference"),
          "must be an array of 2 numbers");
    o.reference = {(*v)[0].get<double>(), (*v)[1].get<double>()};
  }
  s.get("stop_threshold", o.stop_threshold);
  s.get("stop_patience", o.stop_patience);
  s.finish();
}

json write(const opt::Settings& o) {
  return {{"n_init", o.n_init},
          {"iterations", o.iterations},
          {"acquisition_budget", o.acquisition_budget},
          {"refine_starts", o.refine_starts},
          {"map_restarts", o.map_restarts},
          {"performance_episodes", o.performance_episodes},
          {"probe_trials", o.probe_trials},
          {"reference", {o.reference.performance, o.reference.robustness}},
          {"stop_threshold", o.stop_threshold ? json(*o.stop_threshold) : json(nullptr)},
          {"stop_patience", o.stop_patience}};
}

void read_prior(Section s, double& mu, double& sigma) {
  s.get("mu", mu);
  s.get("sigma", sigma);
  s.finish();
  check(sigma > 0.0, s.key("sigma"), "must be positive");
}

bool same(const gp::Hyperpriors& a, const gp::Hyperpriors& b) {
  return a.lengthscale.mu == b.lengthscale.mu && a.lengthscale.sigma == b.lengthscale.sigma &&
         a.signal_std.mu == b.signal_std.mu && a.signal_std.sigma == b.signal_std.sigma &&
         a.coreg_entry.mu == b.coreg_entry.mu && a.coreg_entry.sigma == b.coreg_entry.sigma;
}

template <typename F>
void wrap(const std::string& key, F&& f) {
  try {
    f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError("config: '" + key + "' " + e.what());
  }
}

}  // namespace

furuta::PhysicalParams TrainingMismatch::apply(const furuta::PhysicalParams& nominal) const {
  furuta::PhysicalParams p = nominal;
  p.pendulum_mass *= pendulum_mass_factor;
  p.arm_damping *= arm_damping_factor;
  p.pendulum_damping *= pendulum_damping_factor;
  p.motor_torque_constant *= motor_torque_constant_factor;
  return p;
}

std::vector<TestScenario> default_battery() {
  std::vector<TestScenario> out(4);
  out[0].name = "standard";
  out[1].name = "motor_noise";
  out[1].perturbation.actuation_noise = true;
  out[2].name = "sensor_noise";
  out[2].perturbation.sensor_noise = true;
  out[3].name = "add_2g";
  out[3].perturbation.mass_delta = 0.002;
  return out;
}

void RunConfig::validate() const {
  wrap("plant", [&] { plant.validate(); });
  check(training_mismatch.pendulum_mass_factor > 0.0, "training_mismatch.pendulum_mass_factor", "must be positive");
  check(training_mismatch.arm_damping_factor >= 0.0, "training_mismatch.arm_damping_factor", "must be >= 0");
  check(training_mismatch.pendulum_damping_factor >= 0.0, "training_mismatch.pendulum_damping_factor",
        "must be >= 0");
  check(training_mismatch.motor_torque_constant_factor > 0.0, "training_mismatch.motor_torque_constant_factor",
        "must be positive");
  wrap("observation", [&] { observation.validate(); });
  wrap("reward", [&] { reward.validate(); });
  wrap("stability", [&] { stability.validate(); });
  check(initial_state.alpha_deg >= 0.0, "initial_state.alpha_deg", "must be >= 0");
  check(initial_state.beta_deg >= 0.0, "initial_state.beta_deg", "must be >= 0");
  wrap("grids.delay_max_steps", [&] { grids.delay().validate(); });
  wrap("grids", [&] { grids.gain().validate(); });
  wrap("search_box", [&] { search_box.validate(); });
  wrap("optimizer", [&] { optimizer.validate(); });
  check(hyperpriors.lengthscale.sigma > 0.0 && hyperpriors.signal_std.sigma > 0.0 &&
            hyperpriors.coreg_entry.sigma > 0.0,
        "hyperpriors", "sigmas must be positive");
  check(test.duration > 0.0, "test.duration", "must be positive");
  check(!test.scenarios.empty(), "test.scenarios", "must not be empty");
  for (std::size_t i = 0; i < test.scenarios.size(); ++i) {
    const auto& sc = test.scenarios[i];
    const std::string k = "test.scenarios[" + std::to_string(i) + "]";
    check(!sc.name.empty(), k + ".name", "must not be empty");
    check(sc.n_repeats >= 1, k + ".n_repeats", "must be >= 1");
    check(sc.failure_threshold_deg > 0.0, k + ".failure_threshold_deg", "must be positive");
    wrap(k + ".perturbation", [&] { sc.perturbation.validate(); });
  }
  check(verification.duration > 1.0, "verification.duration", "must exceed 1 s");
  check(verification.trials >= 1, "verification.trials", "must be >= 1");
}

bool RunConfig::operator==(const RunConfig& o) const {
  return mode == o.mode && seed == o.seed && output_dir == o.output_dir && plant == o.plant &&
         training_mismatch == o.training_mismatch && observation == o.observation && reward == o.reward &&
         stability == o.stability && initial_state == o.initial_state && grids == o.grids &&
         search_box == o.search_box && optimizer == o.optimizer && same(hyperpriors, o.hyperpriors) &&
         test == o.test && verification == o.verification;
}

eval::Environment RunConfig::training_environment() const {
  eval::Environment env = nominal_environment();
  env.plant = training_mismatch.apply(plant);
  return env;
}

eval::Environment RunConfig::nominal_environment() const {
  eval::Environment env;
  env.plant = plant;
  env.observation = observation;
  env.reward = reward;
  env.stability = stability;
  env.initial = initial_state;
  return env;
}

opt::Problem RunConfig::problem() const {
  opt::Problem p;
  p.env = training_environment();
  p.delay_grid = grids.delay();
  p.gain_grid = grids.gain();
  p.box = search_box;
  p.priors = hyperpriors;
  return p;
}

opt::Settings RunConfig::settings() const {
  opt::Settings s = optimizer;
  s.mode = mode;
  return s;
}

RunConfig from_json(const json& j) {
  RunConfig c;
  Section root(j, "");
  std::string mode = opt::to_string(c.mode);
  root.get("mode", mode);
  try {
    c.mode = opt::mode_from_string(mode);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("config: 'mode' " + std::string(e.what()));
  }
  root.get("seed", c.seed);
  root.get("output_dir", c.output_dir);
  read(root.child("plant"), c.plant);
  {
    auto s = root.child("training_mismatch");
    s.get("pendulum_mass_factor", c.training_mismatch.pendulum_mass_factor);
    s.get("arm_damping_factor", c.training_mismatch.arm_damping_factor);
    s.get("pendulum_damping_factor", c.training_mismatch.pendulum_damping_factor);
    s.get("motor_torque_constant_factor", c.training_mismatch.motor_torque_constant_factor);
    s.finish();
  }
  read(root.child("observation"), c.observation);
  {
    auto s = root.child("reward");
    s.get("q_diag", c.reward.q_diag);
    s.get("r", c.reward.r);
    s.finish();
  }
  {
    auto s = root.child("stability");
    s.get("arm_box_deg", c.stability.arm_box_deg);
    s.get("pend_box_deg", c.stability.pend_box_deg);
    s.get("window_start", c.stability.window_start);
    s.get("window_end", c.stability.window_end);
    s.get("episode_length", c.stability.episode_length);
    s.finish();
  }
  {
    auto s = root.child("initial_state");
    s.get("alpha_deg", c.initial_state.alpha_deg);
    s.get("beta_deg", c.initial_state.beta_deg);
    s.finish();
  }
  {
    auto s = root.child("grids");
    s.get("delay_max_steps", c.grids.delay_max_steps);
    s.get("gain_count", c.grids.gain_count);
    s.get("gain_lowest", c.grids.gain_lowest);
    s.get("gain_highest", c.grids.gain_highest);
    s.finish();
  }
  {
    auto s = root.child("search_box");
    s.get("lower", c.search_box.lower);
    s.get("upper", c.search_box.upper);
    s.finish();
  }
  read(root.child("optimizer"), c.optimizer);
  {
    auto s = root.child("hyperpriors");
    read_prior(s.child("lengthscale"), c.hyperpriors.lengthscale.mu, c.hyperpriors.lengthscale.sigma);
    read_prior(s.child("signal_std"), c.hyperpriors.signal_std.mu, c.hyperpriors.signal_std.sigma);
    read_prior(s.child("coreg_entry"), c.hyperpriors.coreg_entry.mu, c.hyperpriors.coreg_entry.sigma);
    s.finish();
  }
  {
    auto s = root.child("test");
    s.get("duration", c.test.duration);
    if (auto v = s.find("scenarios")) {
      check(v->is_array(), s.key("scenarios"), "must be an array");
      c.test.scenarios.clear();
      for (std::size_t i = 0; i < v->size(); ++i) {
        Section sc((*v)[i], s.key("scenarios[" + std::to_string(i) + "]"));
        TestScenario t;
        sc.get("name", t.name);
        read(sc.child("perturbation"), t.perturbation);
        sc.get("n_repeats", t.n_repeats);
        sc.get("failure_threshold_deg", t.failure_threshold_deg);
        sc.finish();
        c.test.scenarios.push_back(std::move(t));
      }
    }
    s.finish();
  }
  {
    auto s = root.child("verification");
    s.get("duration", c.verification.duration);
    s.get("trials", c.verification.trials);
    s.finish();
  }
  root.finish();
  c.optimizer.mode = c.mode;
  c.validate();
  return c;
}

json to_json(const RunConfig& c) {
  json scenarios = json::array();
  for (const auto& t : c.test.scenarios)
    scenarios.push_back({{"name", t.name},
                         {"perturbation", write(t.perturbation)},
                         {"n_repeats", t.n_repeats},
                         {"failure_threshold_deg", t.failure_threshold_deg}});
  const auto prior = [](double mu, double sigma) { return json{{"mu", mu}, {"sigma", sigma}}; };
  const auto vec = [](const Vector4& v) { return json::array({v[0], v[1], v[2], v[3]}); };
  return {
      {"mode", opt::to_string(c.mode)},
      {"seed", c.seed},
      {"output_dir", c.output_dir},
      {"plant", write(c.plant)},
      {"training_mismatch",
       {{"pendulum_mass_factor", c.training_mismatch.pendulum_mass_factor},
        {"arm_damping_factor", c.training_mismatch.arm_damping_factor},
        {"pendulum_damping_factor", c.training_mismatch.pendulum_damping_factor},
        {"motor_torque_constant_factor", c.training_mismatch.motor_torque_constant_factor}}},
      {"observation", write(c.observation)},
      {"reward", {{"q_diag", vec(c.reward.q_diag)}, {"r", c.reward.r}}},
      {"stability",
       {{"arm_box_deg", c.stability.arm_box_deg},
        {"pend_box_deg", c.stability.pend_box_deg},
        {"window_start", c.stability.window_start},
        {"window_end", c.stability.window_end},
        {"episode_length", c.stability.episode_length}}},
      {"initial_state", {{"alpha_deg", c.initial_state.alpha_deg}, {"beta_deg", c.initial_state.beta_deg}}},
      {"grids",
       {{"delay_max_steps", c.grids.delay_max_steps},
        {"gain_count", c.grids.gain_count},
        {"gain_lowest", c.grids.gain_lowest},
        {"gain_highest", c.grids.gain_highest}}},
      {"search_box", {{"lower", vec(c.search_box.lower)}, {"upper", vec(c.search_box.upper)}}},
      {"optimizer", write(c.optimizer)},
      {"hyperpriors",
       {{"lengthscale", prior(c.hyperpriors.lengthscale.mu, c.hyperpriors.lengthscale.sigma)},
        {"signal_std", prior(c.hyperpriors.signal_std.mu, c.hyperpriors.signal_std.sigma)},
        {"coreg_entry", prior(c.hyperpriors.coreg_entry.mu, c.hyperpriors.coreg_entry.sigma)}}},
      {"test", {{"duration", c.test.duration}, {"scenarios", scenarios}}},
      {"verification", {{"duration", c.verification.duration}, {"trials", c.verification.trials}}},
  };
}

RunConfig parse(const std::string& text) {
  const json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config: not valid JSON");
  return from_json(j);
}

RunConfig load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot read " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse(ss.str());
}

void save(const RunConfig& c, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << to_json(c).dump(2) << '\n';
}

}  // namespace robustpo::config
