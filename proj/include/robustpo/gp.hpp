#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <json.hpp>

#include "robustpo/types.hpp"

namespace robustpo::gp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Matern-5/2 ARD kernel parameters.
struct KernelParams {
  Vector4 lengthscales = Vector4::Ones();
  double signal_std = 1.0;

  void validate() const;
};

/// Output correlation B = L L^T, stored through its lower-triangular factor.
struct Coregionalization {
  MatrixXd factor = MatrixXd::Identity(2, 2);

  static Coregionalization identity(int outputs) {
    return {MatrixXd::Identity(outputs, outputs)};
  }
  int outputs() const { return static_cast<int>(factor.rows()); }
  MatrixXd matrix() const;
  void validate() const;
};

/// Diagonal observation-noise covariance, one variance per output.
struct NoiseModel {
  VectorXd variance = VectorXd::Constant(2, 1e-2);

  void validate(int outputs) const;
};

struct Hyperparameters {
  KernelParams kernel;
  Coregionalization coreg;
  NoiseModel noise;

  int outputs() const { return coreg.outputs(); }
  void validate() const;
};

nlohmann::json to_json(const Hyperparameters& hp);
Hyperparameters hyperparameters_from_json(const nlohmann::json& j);

/// Training pairs (theta_i, y_i). Every observation has the same length D.
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(int outputs) : outputs_(outputs) {}

  void add(const ControllerGains& input, const VectorXd& observation);
  std::size_t size() const { return inputs_.size(); }
  bool empty() const { return inputs_.empty(); }
  int outputs() const { return outputs_; }

  const std::vector<ControllerGains>& inputs() const { return inputs_; }
  const std::vector<VectorXd>& observations() const { return observations_; }

  /// Output-major stacking: index i*N + u holds output i of point u.
  VectorXd stacked() const;

 private:
  int outputs_ = 2;
  std::vector<ControllerGains> inputs_;
  std::vector<VectorXd> observations_;
};

struct Posterior {
  VectorXd mean;
  MatrixXd covariance;
};

struct LogNormalPrior {
  double mu;
  double sigma;
};
struct NormalPrior {
  double mu;
  double sigma;
};

/// Priors for MAP fitting. Positive parameters are optimized as logarithms and
/// the lognormal priors are evaluated as normal densities on those logarithms.
struct Hyperpriors {
  LogNormalPrior lengthscale{1.0, 3.0};
  LogNormalPrior signal_std{0.35, 1.0};
  NormalPrior coreg_entry{0.0, 1.0};

  double log_density(const Hyperparameters& hp, bool include_coreg) const;
};

double matern52(const ControllerGains& a, const ControllerGains& b, const KernelParams& p);
double icm_cov(const ControllerGains& a, const ControllerGains& b, int i, int j,
               const KernelParams& p, const Coregionalization& coreg);

/// Input-space Gram matrix sigma^2 k(x_u, x_v).
MatrixXd input_gram(const std::vector<ControllerGains>& xs, const KernelParams& p);

/// Full ND x ND covariance B (x) K plus Sigma (x) I_N (no jitter).
MatrixXd noisy_gram(const std::vector<ControllerGains>& xs, const Hyperparameters& hp);

inline constexpr double kBaseJitter = 1e-8;
inline constexpr double kMaxJitter = 1e-4;

/// Cholesky with the escalating-jitter policy; throws NumericalError past kMaxJitter.
struct JitteredCholesky {
  Eigen::LLT<MatrixXd> llt;
  double jitter = 0.0;
};
JitteredCholesky factorize(MatrixXd gram);

/// Conditioned GP ready for repeated predictions.
class Model {
 public:
  Model(Dataset data, Hyperparameters hp);

  Posterior predict(const ControllerGains& q) const;
  const Hyperparameters& hyperparameters() const { return hp_; }
  const Dataset& data() const { return data_; }
  double jitter() const { return chol_ ? chol_->jitter : 0.0; }

 private:
  Dataset data_;
  Hyperparameters hp_;
  MatrixXd prior_cov_;  // B sigma^2
  std::optional<JitteredCholesky> chol_;
  VectorXd alpha_;
};

Posterior gp_posterior(const Dataset& data, const ControllerGains& q, const Hyperparameters& hp);

/// Packed unconstrained vector: [log lengthscales(4), log signal_std,
/// lower-triangular factor entries row by row, log noise variances(D)].
VectorXd pack(const Hyperparameters& hp);
Hyperparameters unpack(const VectorXd& v, int outputs);
int packed_size(int outputs);

double log_marginal_likelihood(const Dataset& data, const Hyperparameters& hp);
double log_posterior_density(const Dataset& data, const Hyperparameters& hp,
                             const Hyperpriors& priors);

struct ValueAndGradient {
  double value = 0.0;
  VectorXd gradient;  // w.r.t. pack(hp)
};

/// Log marginal likelihood (optionally plus log prior) and its analytic
/// gradient with respect to the packed parameters.
ValueAndGradient log_posterior_gradient(const Dataset& data, const Hyperparameters& hp,
                                        const Hyperpriors* priors, bool include_coreg = true);

struct FitOptions {
  int restarts = 8;
  std::uint64_t seed = 0;
  std::optional<Hyperparameters> initial;
  bool learn_coregionalization = true;
  double noise_min = 1e-6;
  double noise_max = 1.0;
  int max_iterations = 200;
};

struct FitResult {
  Hyperparameters params;
  double log_density = 0.0;
  bool fell_back = false;
  std::string warning;
};

Hyperparameters prior_medians(int outputs, const Hyperpriors& priors);

FitResult fit_map(const Dataset& data, const Hyperpriors& priors, const FitOptions& options);

}  // namespace robustpo::gp
