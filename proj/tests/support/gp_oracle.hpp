#pragma once

#include <cmath>
#include <random>

#include "robustpo/gp.hpp"
#include "support/oracles.hpp"

// Random GP fixtures and a dense ICM posterior built without the library kernels.
namespace robustpo::oracle {

using gp::Dataset;
using gp::Hyperparameters;
using gp::kBaseJitter;
using gp::Posterior;

inline ControllerGains random_gains(std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  return ControllerGains(u(rng), u(rng), u(rng), u(rng));
}

inline Hyperparameters random_hyper(std::mt19937_64& rng, int D = 2) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> n(0.0, 1.0);
  Hyperparameters hp;
  for (int d = 0; d < 4; ++d) hp.kernel.lengthscales[d] = 0.3 + 1.5 * u(rng);
  hp.kernel.signal_std = 0.5 + u(rng);
  hp.coreg.factor = Eigen::MatrixXd::Zero(D, D);
  for (int i = 0; i < D; ++i)
    for (int j = 0; j <= i; ++j) hp.coreg.factor(i, j) = i == j ? 0.5 + u(rng) : n(rng);
  hp.noise.variance = Eigen::VectorXd::Constant(D, 0.0);
  for (int i = 0; i < D; ++i) hp.noise.variance[i] = 1e-3 + 0.05 * u(rng);
  return hp;
}

inline Dataset random_dataset(std::mt19937_64& rng, int n, int D = 2) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Dataset d(D);
  for (int k = 0; k < n; ++k) {
    Eigen::VectorXd y(D);
    for (int i = 0; i < D; ++i) y[i] = u(rng);
    d.add(random_gains(rng), y);
  }
  return d;
}

// ARD distance and covariance assembled here without touching library kernels.
inline double ard_r(const ControllerGains& a, const ControllerGains& b, const Vector4& l) {
  double s = 0.0;
  for (int d = 0; d < 4; ++d) s += std::pow((a[d] - b[d]) / l[d], 2);
  return std::sqrt(s);
}

inline Eigen::MatrixXd coreg_oracle(const Eigen::MatrixXd& L) {
  const auto D = L.rows();
  Eigen::MatrixXd B(D, D);
  for (Eigen::Index i = 0; i < D; ++i)
    for (Eigen::Index j = 0; j < D; ++j) {
      double s = 0.0;
      for (Eigen::Index k = 0; k < D; ++k) s += L(i, k) * L(j, k);
      B(i, j) = s;
    }
  return B;
}

// Output-major dense K + Sigma (+ the base jitter the library always adds).
inline Eigen::MatrixXd dense_gram(const Dataset& data, const Hyperparameters& hp, double jitter) {
  const auto N = static_cast<Eigen::Index>(data.size());
  const auto D = data.outputs();
  const Eigen::MatrixXd B = coreg_oracle(hp.coreg.factor);
  Eigen::MatrixXd K(N * D, N * D);
  for (int i = 0; i < D; ++i)
    for (int j = 0; j < D; ++j)
      for (Eigen::Index u = 0; u < N; ++u)
        for (Eigen::Index v = 0; v < N; ++v)
          K(i * N + u, j * N + v) =
              B(i, j) * matern52_scalar(ard_r(data.inputs()[u], data.inputs()[v], hp.kernel.lengthscales),
                                                hp.kernel.signal_std);
  for (int i = 0; i < D; ++i)
    for (Eigen::Index u = 0; u < N; ++u) K(i * N + u, i * N + u) += hp.noise.variance[i] + jitter;
  return K;
}

inline Posterior dense_posterior(const Dataset& data, const ControllerGains& q, const Hyperparameters& hp) {
  const auto N = static_cast<Eigen::Index>(data.size());
  const auto D = data.outputs();
  const Eigen::MatrixXd B = coreg_oracle(hp.coreg.factor);
  const Eigen::MatrixXd L = cholesky_lower(dense_gram(data, hp, kBaseJitter));
  Eigen::VectorXd y(N * D);
  for (int i = 0; i < D; ++i)
    for (Eigen::Index u = 0; u < N; ++u) y[i * N + u] = data.observations()[u][i];
  const Eigen::VectorXd alpha = backward_sub_transposed(L, forward_sub(L, y));
  Eigen::MatrixXd Ks(N * D, D);
  for (int i = 0; i < D; ++i)
    for (int j = 0; j < D; ++j)
      for (Eigen::Index u = 0; u < N; ++u)
        Ks(i * N + u, j) =
            B(i, j) * matern52_scalar(ard_r(data.inputs()[u], q, hp.kernel.lengthscales), hp.kernel.signal_std);
  Posterior p;
  p.mean = Ks.transpose() * alpha;
  Eigen::MatrixXd V(N * D, D);
  for (int j = 0; j < D; ++j) V.col(j) = forward_sub(L, Ks.col(j));
  p.covariance = B * hp.kernel.signal_std * hp.kernel.signal_std - V.transpose() * V;
  return p;
}

}  // namespace robustpo::oracle
