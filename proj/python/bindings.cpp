#include <sstream>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "robustpo/config.hpp"
#include "robustpo/evaluation.hpp"
#include "robustpo/furuta.hpp"
#include "robustpo/gp.hpp"
#include "robustpo/harness.hpp"
#include "robustpo/pareto.hpp"

namespace py = pybind11;
using namespace robustpo;

namespace {

std::vector<ObjectiveVector> points(const std::vector<std::pair<double, double>>& ys) {
  std::vector<ObjectiveVector> out;
  for (auto [p, r] : ys) out.push_back({p, r});
  return out;
}

std::vector<std::pair<double, double>> pairs(const pareto::ParetoFront& f) {
  std::vector<std::pair<double, double>> out;
  for (std::size_t i = 0; i < f.size(); ++i) out.emplace_back(f[i].performance, f[i].robustness);
  return out;
}

gp::Dataset dataset(const std::vector<Vector4>& xs, const Eigen::MatrixXd& ys) {
  if (static_cast<Eigen::Index>(xs.size()) != ys.rows()) throw std::invalid_argument("inputs and outputs differ in length");
  gp::Dataset d(static_cast<int>(ys.cols()));
  for (std::size_t i = 0; i < xs.size(); ++i) d.add(ControllerGains(xs[i]), ys.row(i).transpose());
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Robust policy optimization core";

  py::register_exception<NumericalError>(m, "NumericalError");
  py::register_exception<config::ConfigError>(m, "ConfigError", PyExc_ValueError);

  m.def("hypervolume_2d",
        [](const std::vector<std::pair<double, double>>& ys, std::pair<double, double> ref) {
          return pareto::hypervolume_2d(pareto::pareto_extract(points(ys)), {ref.first, ref.second});
        },
        py::arg("points"), py::arg("reference") = std::make_pair(0.0, 0.0),
        "Hypervolume of the non-dominated subset of `points`.");
  m.def("pareto_front", [](const std::vector<std::pair<double, double>>& ys) { return pairs(pareto::pareto_extract(points(ys))); },
        py::arg("points"));
  m.def("ehi",
        [](double m1, double s1, double m2, double s2, const std::vector<std::pair<double, double>>& front,
           std::pair<double, double> ref) {
          return pareto::ehi(m1, s1, m2, s2, pareto::pareto_extract(points(front)), {ref.first, ref.second});
        },
        py::arg("mean_perf"), py::arg("std_perf"), py::arg("mean_rob"), py::arg("std_rob"), py::arg("front"),
        py::arg("reference") = std::make_pair(0.0, 0.0));
  m.def("ei", &pareto::ei, py::arg("mean"), py::arg("std"), py::arg("best"));

  m.def("matern52",
        [](const Vector4& a, const Vector4& b, const Vector4& lengthscales, double signal_std) {
          return gp::matern52(ControllerGains(a), ControllerGains(b), {lengthscales, signal_std});
        },
        py::arg("a"), py::arg("b"), py::arg("lengthscales"), py::arg("signal_std"));
  m.def("gp_posterior",
        [](const std::vector<Vector4>& xs, const Eigen::MatrixXd& ys, const Vector4& q, const std::string& hp_json) {
          const auto hp = gp::hyperparameters_from_json(nlohmann::json::parse(hp_json));
          const auto post = gp::gp_posterior(dataset(xs, ys), ControllerGains(q), hp);
          return std::make_pair(Eigen::VectorXd(post.mean), Eigen::MatrixXd(post.covariance));
        },
        py::arg("inputs"), py::arg("outputs"), py::arg("query"), py::arg("hyperparameters_json"),
        "Posterior (mean, covariance) at `query`; hyperparameters as a JSON record.");
  m.def("log_marginal_likelihood",
        [](const std::vector<Vector4>& xs, const Eigen::MatrixXd& ys, const std::string& hp_json) {
          return gp::log_marginal_likelihood(dataset(xs, ys),
                                             gp::hyperparameters_from_json(nlohmann::json::parse(hp_json)));
        },
        py::arg("inputs"), py::arg("outputs"), py::arg("hyperparameters_json"));

  m.def("reward", [](const Vector4& x, double u) { return eval::reward(furuta::SimState::from(x), u, {}); },
        py::arg("state"), py::arg("voltage"));
  m.def("scale_return", &eval::scale_return, py::arg("raw"));
  m.def("rollout_csv",
        [](const Vector4& gains, double duration, const Vector4& init, std::uint64_t seed) {
          const auto traj = furuta::rollout(ControllerGains(gains), {}, {}, {}, duration, furuta::SimState::from(init), seed);
          std::ostringstream os;
          furuta::write_trajectory_csv(os, traj);
          return os.str();
        },
        py::arg("gains"), py::arg("duration"), py::arg("initial_state"), py::arg("seed") = 0,
        "Nominal-plant rollout as trajectory CSV text.");
  m.def("performance",
        [](const Vector4& gains, int episodes, std::uint64_t seed) {
          return eval::performance_estimate(ControllerGains(gains), {}, episodes, seed).scaled;
        },
        py::arg("gains"), py::arg("episodes") = 10, py::arg("seed") = 0);

  m.def("elbow_index",
        [](const std::vector<std::pair<double, double>>& front) { return harness::elbow_index(points(front)); },
        py::arg("front"));
  m.def("normalize_config",
        [](const std::string& text) { return config::to_json(config::parse(text)).dump(2); }, py::arg("text"),
        "Parses a run configuration strictly and returns it with every default filled in.");
}
