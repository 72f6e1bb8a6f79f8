#pragma once

#include <cmath>
#include <functional>
#include <limits>

#include <Eigen/Core>

namespace robustpo::detail {

struct BfgsResult {
  Eigen::VectorXd x;
  double value = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
};

// Objective returns f(x) and writes grad; non-finite f means "outside the domain".
using Objective = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

/// Minimizes with BFGS + backtracking Armijo search. Every accepted step
/// strictly lowers f, so the result is never worse than x0.
inline BfgsResult minimize_bfgs(const Objective& f, Eigen::VectorXd x0, int max_iterations,
                                double grad_tol = 1e-6) {
  const auto n = x0.size();
  BfgsResult res;
  Eigen::VectorXd g(n);
  double fx = f(x0, g);
  res.x = x0;
  res.value = fx;
  if (!std::isfinite(fx) || !g.allFinite()) return res;

  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd x = x0, g_new(n), x_new(n);
  for (int it = 0; it < max_iterations; ++it) {
    res.iterations = it + 1;
    if (g.lpNorm<Eigen::Infinity>() < grad_tol) {
      res.converged = true;
      break;
    }
    Eigen::VectorXd dir = -H * g;
    double slope = g.dot(dir);
    if (slope >= 0.0) {
      H.setIdentity();
      dir = -g;
      slope = -g.squaredNorm();
    }
    // cap the first trial step in parameter space
    const double max_step = 2.0;
    double step = std::min(1.0, max_step / std::max(dir.lpNorm<Eigen::Infinity>(), 1e-300));
    double f_new = std::numeric_limits<double>::infinity();
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      x_new = x + step * dir;
      f_new = f(x_new, g_new);
      if (std::isfinite(f_new) && g_new.allFinite() && f_new <= fx + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted || !(f_new < fx)) {
      res.converged = true;
      break;
    }
    const Eigen::VectorXd s = x_new - x;
    const Eigen::VectorXd y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
      H = (I - rho * s * y.transpose()) * H * (I - rho * y * s.transpose()) +
          rho * s * s.transpose();
    }
    const double rel = std::abs(fx - f_new) / std::max(1.0, std::abs(fx));
    x = x_new;
    g = g_new;
    fx = f_new;
    res.x = x;
    res.value = fx;
    if (rel < 1e-12) {
      res.converged = true;
      break;
    }
  }
  return res;
}

}  // namespace robustpo::detail
