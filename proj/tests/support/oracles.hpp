#pragma once

// Test-only reference implementations. Nothing here calls into the code
// paths it is used to check.

#include <cmath>
#include <complex>
#include <vector>

#include <Eigen/Dense>

#include "robustpo/furuta.hpp"
#include "robustpo/types.hpp"

namespace robustpo::oracle {

/// Ackermann pole placement for x' = A x + B u. Returns theta with u = theta^T x.
inline Vector4 place_poles(const Eigen::Matrix4d& A, const Vector4& B, const std::vector<double>& poles) {
  // characteristic polynomial coefficients of prod (s - p)
  std::vector<double> c{1.0};
  for (double p : poles) {
    std::vector<double> next(c.size() + 1, 0.0);
    for (std::size_t i = 0; i < c.size(); ++i) {
      next[i] += c[i];
      next[i + 1] -= p * c[i];
    }
    c = next;
  }
  Eigen::Matrix4d phi = Eigen::Matrix4d::Zero();
  Eigen::Matrix4d Ak = Eigen::Matrix4d::Identity();
  for (int k = 4; k >= 0; --k) {
    phi += c[k] * Ak;
    Ak = Ak * A;
  }
  Eigen::Matrix4d C;
  C.col(0) = B;
  C.col(1) = A * B;
  C.col(2) = A * A * B;
  C.col(3) = A * A * A * B;
  Eigen::RowVector4d e = Eigen::RowVector4d::Zero();
  e[3] = 1.0;
  const Eigen::RowVector4d K = e * C.inverse() * phi;
  return -K.transpose();
}

/// Gains that stabilize the upright equilibrium of the given plant, found by
/// pole placement on the finite-difference linearization.
inline ControllerGains pole_placement_gains(const furuta::PhysicalParams& p) {
  const auto lin = furuta::linearize(furuta::SimState{}, 0.0, p);
  return ControllerGains(place_poles(lin.A, lin.B, {-3.0, -4.0, -15.0, -18.0}));
}

/// Plain textbook Cholesky, L L^T = A.
inline Eigen::MatrixXd cholesky_lower(const Eigen::MatrixXd& A) {
  const auto n = A.rows();
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double d = A(j, j);
    for (Eigen::Index k = 0; k < j; ++k) d -= L(j, k) * L(j, k);
    L(j, j) = std::sqrt(d);
    for (Eigen::Index i = j + 1; i < n; ++i) {
      double s = A(i, j);
      for (Eigen::Index k = 0; k < j; ++k) s -= L(i, k) * L(j, k);
      L(i, j) = s / L(j, j);
    }
  }
  return L;
}

inline Eigen::VectorXd forward_sub(const Eigen::MatrixXd& L, const Eigen::VectorXd& b) {
  Eigen::VectorXd x(b.size());
  for (Eigen::Index i = 0; i < b.size(); ++i) {
    double s = b[i];
    for (Eigen::Index k = 0; k < i; ++k) s -= L(i, k) * x[k];
    x[i] = s / L(i, i);
  }
  return x;
}

inline Eigen::VectorXd backward_sub_transposed(const Eigen::MatrixXd& L, const Eigen::VectorXd& b) {
  const auto n = b.size();
  Eigen::VectorXd x(n);
  for (Eigen::Index i = n - 1; i >= 0; --i) {
    double s = b[i];
    for (Eigen::Index k = i + 1; k < n; ++k) s -= L(k, i) * x[k];
    x[i] = s / L(i, i);
  }
  return x;
}

/// Independent scalar Matern-5/2 evaluation.
inline double matern52_scalar(double r, double sigma) {
  const double s5 = std::sqrt(5.0);
  return sigma * sigma * (1.0 + s5 * r + 5.0 * r * r / 3.0) * std::exp(-s5 * r);
}

}  // namespace robustpo::oracle
