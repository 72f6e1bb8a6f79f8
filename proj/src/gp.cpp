#include "robustpo/gp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "bfgs.hpp"
#include "robustpo/rng.hpp"

namespace robustpo::gp {

namespace {

constexpr double kSqrt5 = 2.23606797749978969640917366873;
constexpr double kLog2Pi = 1.83787706640934548356065947281;

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

double normal_logpdf(double x, double mu, double sigma) {
  const double z = (x - mu) / sigma;
  return -0.5 * z * z - std::log(sigma) - 0.5 * kLog2Pi;
}

// ARD-scaled Euclidean distance.
double scaled_r(const ControllerGains& a, const ControllerGains& b, const Vector4& ls) {
  return ((a.theta - b.theta).cwiseQuotient(ls)).norm();
}

double matern_unit(double r) {
  return (1.0 + kSqrt5 * r + (5.0 / 3.0) * r * r) * std::exp(-kSqrt5 * r);
}

}  // namespace

void KernelParams::validate() const {
  require(lengthscales.allFinite() && (lengthscales.array() > 0.0).all(),
          "kernel lengthscales must be finite and positive");
  require(std::isfinite(signal_std) && signal_std > 0.0, "kernel signal_std must be finite and positive");
}

MatrixXd Coregionalization::matrix() const { return factor * factor.transpose(); }

void Coregionalization::validate() const {
  require(factor.rows() == factor.cols() && factor.rows() >= 1, "coregionalization factor must be square");
  require(factor.allFinite(), "coregionalization factor must be finite");
  for (int i = 0; i < factor.rows(); ++i)
    for (int j = i + 1; j < factor.cols(); ++j)
      require(factor(i, j) == 0.0, "coregionalization factor must be lower-triangular");
}

void NoiseModel::validate(int outputs) const {
  require(variance.size() == outputs, "noise model must have one variance per output");
  require(variance.allFinite() && (variance.array() >= 0.0).all(), "noise variances must be finite and >= 0");
}

void Hyperparameters::validate() const {
  kernel.validate();
  coreg.validate();
  noise.validate(coreg.outputs());
}

nlohmann::json to_json(const Hyperparameters& hp) {
  nlohmann::json j;
  j["lengthscales"] = std::vector<double>(hp.kernel.lengthscales.data(), hp.kernel.lengthscales.data() + 4);
  j["signal_std"] = hp.kernel.signal_std;
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < hp.coreg.factor.rows(); ++i) {
    std::vector<double> row(hp.coreg.factor.cols());
    for (int k = 0; k < hp.coreg.factor.cols(); ++k) row[k] = hp.coreg.factor(i, k);
    rows.push_back(row);
  }
  j["coreg_factor"] = rows;
  j["noise_var"] = std::vector<double>(hp.noise.variance.data(), hp.noise.variance.data() + hp.noise.variance.size());
  return j;
}

Hyperparameters hyperparameters_from_json(const nlohmann::json& j) {
  Hyperparameters hp;
  const auto ls = j.at("lengthscales").get<std::vector<double>>();
  require(ls.size() == 4, "lengthscales must have 4 entries");
  for (int d = 0; d < 4; ++d) hp.kernel.lengthscales[d] = ls[d];
  hp.kernel.signal_std = j.at("signal_std").get<double>();
  const auto rows = j.at("coreg_factor").get<std::vector<std::vector<double>>>();
  const int D = static_cast<int>(rows.size());
  hp.coreg.factor = MatrixXd(D, D);
  for (int i = 0; i < D; ++i) {
    require(static_cast<int>(rows[i].size()) == D, "coreg_factor must be square");
    for (int k = 0; k < D; ++k) hp.coreg.factor(i, k) = rows[i][k];
  }
  const auto nv = j.at("noise_var").get<std::vector<double>>();
  hp.noise.variance = Eigen::Map<const VectorXd>(nv.data(), static_cast<Eigen::Index>(nv.size()));
  hp.validate();
  return hp;
}

void Dataset::add(const ControllerGains& input, const VectorXd& observation) {
  require(observation.size() == outputs_, "observation has the wrong number of outputs");
  require(input.theta.allFinite(), "dataset input must be finite");
  require(observation.allFinite(), "dataset observation must be finite");
  inputs_.push_back(input);
  observations_.push_back(observation);
}

VectorXd Dataset::stacked() const {
  const auto N = static_cast<Eigen::Index>(size());
  VectorXd y(N * outputs_);
  for (int i = 0; i < outputs_; ++i)
    for (Eigen::Index u = 0; u < N; ++u) y[i * N + u] = observations_[u][i];
  return y;
}

double Hyperpriors::log_density(const Hyperparameters& hp, bool include_coreg) const {
  double lp = 0.0;
  for (int d = 0; d < 4; ++d)
    lp += normal_logpdf(std::log(hp.kernel.lengthscales[d]), lengthscale.mu, lengthscale.sigma);
  lp += normal_logpdf(std::log(hp.kernel.signal_std), signal_std.mu, signal_std.sigma);
  if (include_coreg) {
    const auto& L = hp.coreg.factor;
    for (int i = 0; i < L.rows(); ++i)
      for (int k = 0; k <= i; ++k) lp += normal_logpdf(L(i, k), coreg_entry.mu, coreg_entry.sigma);
  }
  return lp;
}

double matern52(const ControllerGains& a, const ControllerGains& b, const KernelParams& p) {
  require(a.theta.allFinite() && b.theta.allFinite(), "matern52: inputs must be finite");
  p.validate();
  const double s2 = p.signal_std * p.signal_std;
  return s2 * matern_unit(scaled_r(a, b, p.lengthscales));
}

double icm_cov(const ControllerGains& a, const ControllerGains& b, int i, int j, const KernelParams& p,
               const Coregionalization& coreg) {
  const int D = coreg.outputs();
  require(i >= 0 && i < D && j >= 0 && j < D, "icm_cov: output index out of range");
  const MatrixXd B = coreg.matrix();
  return B(i, j) * matern52(a, b, p);
}

MatrixXd input_gram(const std::vector<ControllerGains>& xs, const KernelParams& p) {
  const auto N = static_cast<Eigen::Index>(xs.size());
  const double s2 = p.signal_std * p.signal_std;
  MatrixXd K(N, N);
  for (Eigen::Index u = 0; u < N; ++u) {
    K(u, u) = s2;
    for (Eigen::Index v = u + 1; v < N; ++v) {
      K(u, v) = s2 * matern_unit(scaled_r(xs[u], xs[v], p.lengthscales));
      K(v, u) = K(u, v);
    }
  }
  return K;
}

MatrixXd noisy_gram(const std::vector<ControllerGains>& xs, const Hyperparameters& hp) {
  const auto N = static_cast<Eigen::Index>(xs.size());
  const int D = hp.outputs();
  const MatrixXd Kx = input_gram(xs, hp.kernel);
  const MatrixXd B = hp.coreg.matrix();
  MatrixXd G(N * D, N * D);
  for (int i = 0; i < D; ++i)
    for (int j = 0; j < D; ++j) G.block(i * N, j * N, N, N) = B(i, j) * Kx;
  for (int i = 0; i < D; ++i) G.block(i * N, i * N, N, N).diagonal().array() += hp.noise.variance[i];
  return G;
}

JitteredCholesky factorize(MatrixXd gram) {
  JitteredCholesky out;
  double jitter = kBaseJitter;
  gram.diagonal().array() += jitter;
  while (true) {
    out.llt.compute(gram);
    if (out.llt.info() == Eigen::Success && out.llt.matrixLLT().diagonal().allFinite()) {
      out.jitter = jitter;
      return out;
    }
    if (jitter >= kMaxJitter * (1 - 1e-12)) break;
    gram.diagonal().array() += 9.0 * jitter;
    jitter *= 10.0;
  }
  std::ostringstream msg;
  msg << "Gram matrix of size " << gram.rows() << " is not positive definite even with diagonal jitter "
      << kMaxJitter << " (ill-conditioned covariance)";
  throw NumericalError(msg.str());
}

Model::Model(Dataset data, Hyperparameters hp) : data_(std::move(data)), hp_(std::move(hp)) {
  hp_.validate();
  require(data_.outputs() == hp_.outputs(), "dataset and hyperparameters disagree on output count");
  const double s2 = hp_.kernel.signal_std * hp_.kernel.signal_std;
  prior_cov_ = hp_.coreg.matrix() * s2;
  if (data_.empty()) return;
  chol_ = factorize(noisy_gram(data_.inputs(), hp_));
  alpha_ = chol_->llt.solve(data_.stacked());
}

Posterior Model::predict(const ControllerGains& q) const {
  require(q.theta.allFinite(), "query must be finite");
  const int D = hp_.outputs();
  Posterior post;
  if (!chol_) {
    post.mean = VectorXd::Zero(D);
    post.covariance = prior_cov_;
    return post;
  }
  const auto N = static_cast<Eigen::Index>(data_.size());
  const double s2 = hp_.kernel.signal_std * hp_.kernel.signal_std;
  VectorXd kq(N);
  for (Eigen::Index u = 0; u < N; ++u) kq[u] = s2 * matern_unit(scaled_r(data_.inputs()[u], q, hp_.kernel.lengthscales));
  const MatrixXd B = hp_.coreg.matrix();
  MatrixXd Kstar(N * D, D);
  for (int i = 0; i < D; ++i)
    for (int j = 0; j < D; ++j) Kstar.block(i * N, j, N, 1) = B(i, j) * kq;
  post.mean = Kstar.transpose() * alpha_;
  const MatrixXd V = chol_->llt.matrixL().solve(Kstar);
  post.covariance = prior_cov_ - V.transpose() * V;
  post.covariance = 0.5 * (post.covariance + post.covariance.transpose()).eval();
  return post;
}

Posterior gp_posterior(const Dataset& data, const ControllerGains& q, const Hyperparameters& hp) {
  return Model(data, hp).predict(q);
}

int packed_size(int outputs) { return 5 + outputs * (outputs + 1) / 2 + outputs; }

VectorXd pack(const Hyperparameters& hp) {
  const int D = hp.outputs();
  VectorXd v(packed_size(D));
  int k = 0;
  for (int d = 0; d < 4; ++d) v[k++] = std::log(hp.kernel.lengthscales[d]);
  v[k++] = std::log(hp.kernel.signal_std);
  for (int i = 0; i < D; ++i)
    for (int c = 0; c <= i; ++c) v[k++] = hp.coreg.factor(i, c);
  for (int i = 0; i < D; ++i) v[k++] = std::log(hp.noise.variance[i]);
  return v;
}

Hyperparameters unpack(const VectorXd& v, int outputs) {
  require(v.size() == packed_size(outputs), "packed hyperparameter vector has the wrong size");
  Hyperparameters hp;
  int k = 0;
  for (int d = 0; d < 4; ++d) hp.kernel.lengthscales[d] = std::exp(v[k++]);
  hp.kernel.signal_std = std::exp(v[k++]);
  hp.coreg.factor = MatrixXd::Zero(outputs, outputs);
  for (int i = 0; i < outputs; ++i)
    for (int c = 0; c <= i; ++c) hp.coreg.factor(i, c) = v[k++];
  hp.noise.variance = VectorXd(outputs);
  for (int i = 0; i < outputs; ++i) hp.noise.variance[i] = std::exp(v[k++]);
  return hp;
}

double log_marginal_likelihood(const Dataset& data, const Hyperparameters& hp) {
  require(!data.empty(), "log marginal likelihood needs a nonempty dataset");
  hp.validate();
  const auto chol = factorize(noisy_gram(data.inputs(), hp));
  const VectorXd y = data.stacked();
  const VectorXd alpha = chol.llt.solve(y);
  const double logdet = 2.0 * chol.llt.matrixLLT().diagonal().array().log().sum();
  return -0.5 * y.dot(alpha) - 0.5 * logdet - 0.5 * static_cast<double>(y.size()) * kLog2Pi;
}

double log_posterior_density(const Dataset& data, const Hyperparameters& hp, const Hyperpriors& priors) {
  return log_marginal_likelihood(data, hp) + priors.log_density(hp, true);
}

ValueAndGradient log_posterior_gradient(const Dataset& data, const Hyperparameters& hp,
                                        const Hyperpriors* priors, bool include_coreg) {
  require(!data.empty(), "log posterior gradient needs a nonempty dataset");
  hp.validate();
  const auto N = static_cast<Eigen::Index>(data.size());
  const int D = hp.outputs();
  const auto& xs = data.inputs();
  const MatrixXd Kx = input_gram(xs, hp.kernel);
  const MatrixXd B = hp.coreg.matrix();
  const auto chol = factorize(noisy_gram(xs, hp));
  const VectorXd y = data.stacked();
  const VectorXd alpha = chol.llt.solve(y);
  const double logdet = 2.0 * chol.llt.matrixLLT().diagonal().array().log().sum();

  ValueAndGradient out;
  out.value = -0.5 * y.dot(alpha) - 0.5 * logdet - 0.5 * static_cast<double>(N * D) * kLog2Pi;
  out.gradient = VectorXd::Zero(packed_size(D));

  // d lml / d eta = 0.5 tr(W dK),  W = alpha alpha^T - K^-1
  MatrixXd W = alpha * alpha.transpose();
  W -= chol.llt.solve(MatrixXd::Identity(N * D, N * D));

  auto block_dot = [&](int i, int j, const MatrixXd& M) { return W.block(i * N, j * N, N, N).cwiseProduct(M).sum(); };

  const Vector4& ls = hp.kernel.lengthscales;
  const double s2 = hp.kernel.signal_std * hp.kernel.signal_std;
  for (int d = 0; d < 4; ++d) {
    MatrixXd dK = MatrixXd::Zero(N, N);
    for (Eigen::Index u = 0; u < N; ++u)
      for (Eigen::Index v = u + 1; v < N; ++v) {
        const double r = scaled_r(xs[u], xs[v], ls);
        const double delta = (xs[u][d] - xs[v][d]) / ls[d];
        dK(u, v) = s2 * (5.0 / 3.0) * (1.0 + kSqrt5 * r) * std::exp(-kSqrt5 * r) * delta * delta;
        dK(v, u) = dK(u, v);
      }
    double g = 0.0;
    for (int i = 0; i < D; ++i)
      for (int j = 0; j < D; ++j) g += B(i, j) * block_dot(i, j, dK);
    out.gradient[d] = 0.5 * g;
  }

  MatrixXd S(D, D);
  for (int i = 0; i < D; ++i)
    for (int j = 0; j < D; ++j) S(i, j) = block_dot(i, j, Kx);
  out.gradient[4] = (B.cwiseProduct(S)).sum();  // 0.5 * tr(W * 2K)

  const MatrixXd SL = S * hp.coreg.factor;
  int k = 5;
  for (int i = 0; i < D; ++i)
    for (int c = 0; c <= i; ++c) out.gradient[k++] = SL(i, c);
  for (int i = 0; i < D; ++i)
    out.gradient[k++] = 0.5 * hp.noise.variance[i] * W.block(i * N, i * N, N, N).trace();

  if (priors) {
    out.value += priors->log_density(hp, include_coreg);
    const VectorXd p = pack(hp);
    for (int d = 0; d < 4; ++d)
      out.gradient[d] -= (p[d] - priors->lengthscale.mu) / (priors->lengthscale.sigma * priors->lengthscale.sigma);
    out.gradient[4] -= (p[4] - priors->signal_std.mu) / (priors->signal_std.sigma * priors->signal_std.sigma);
    if (include_coreg) {
      const double v2 = priors->coreg_entry.sigma * priors->coreg_entry.sigma;
      for (int c = 5; c < 5 + D * (D + 1) / 2; ++c) out.gradient[c] -= (p[c] - priors->coreg_entry.mu) / v2;
    }
  }
  return out;
}

Hyperparameters prior_medians(int outputs, const Hyperpriors& priors) {
  Hyperparameters hp;
  hp.kernel.lengthscales = Vector4::Constant(std::exp(priors.lengthscale.mu));
  hp.kernel.signal_std = std::exp(priors.signal_std.mu);
  hp.coreg = Coregionalization::identity(outputs);
  hp.noise.variance = VectorXd::Constant(outputs, 1e-2);
  return hp;
}

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Optimization coordinates: packed vector with the log-noise entries replaced
// by logits that map into [noise_min, noise_max].
struct FitTransform {
  int outputs;
  double lo, hi;

  int noise_offset() const { return packed_size(outputs) - outputs; }

  VectorXd to_z(const Hyperparameters& hp) const {
    VectorXd z = pack(hp);
    for (int i = 0; i < outputs; ++i) {
      double n = std::clamp(hp.noise.variance[i], lo, hi);
      double t = (n - lo) / (hi - lo);
      t = std::clamp(t, 1e-12, 1.0 - 1e-12);
      z[noise_offset() + i] = std::log(t / (1.0 - t));
    }
    return z;
  }

  Hyperparameters from_z(const VectorXd& z) const {
    VectorXd p = z;
    for (int i = 0; i < outputs; ++i) p[noise_offset() + i] = std::log(lo + (hi - lo) * sigmoid(z[noise_offset() + i]));
    return unpack(p, outputs);
  }

  // scales d/d(log n) into d/dz
  void chain(const VectorXd& z, VectorXd& grad) const {
    for (int i = 0; i < outputs; ++i) {
      const double s = sigmoid(z[noise_offset() + i]);
      const double n = lo + (hi - lo) * s;
      grad[noise_offset() + i] *= (hi - lo) * s * (1.0 - s) / n;
    }
  }
};

Hyperparameters random_start(int outputs, const Hyperpriors& priors, Rng& rng, bool learn_coreg,
                             const Coregionalization& fixed_coreg) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::normal_distribution<double> nrm(priors.coreg_entry.mu, priors.coreg_entry.sigma);
  Hyperparameters hp;
  for (int d = 0; d < 4; ++d)
    hp.kernel.lengthscales[d] = std::exp(priors.lengthscale.mu + priors.lengthscale.sigma * u(rng));
  hp.kernel.signal_std = std::exp(priors.signal_std.mu + priors.signal_std.sigma * u(rng));
  if (learn_coreg) {
    hp.coreg.factor = MatrixXd::Zero(outputs, outputs);
    for (int i = 0; i < outputs; ++i)
      for (int c = 0; c <= i; ++c) hp.coreg.factor(i, c) = nrm(rng);
  } else {
    hp.coreg = fixed_coreg;
  }
  hp.noise.variance = VectorXd(outputs);
  for (int i = 0; i < outputs; ++i) hp.noise.variance[i] = std::pow(10.0, -4.0 + 1.5 * (u(rng) + 1.0));
  return hp;
}

}  // namespace

FitResult fit_map(const Dataset& data, const Hyperpriors& priors, const FitOptions& options) {
  require(!data.empty(), "fit_map needs a nonempty dataset");
  require(options.restarts >= 1, "fit_map needs at least one restart");
  require(options.noise_min > 0.0 && options.noise_max > options.noise_min, "invalid noise bounds");
  const int D = data.outputs();
  const FitTransform tf{D, options.noise_min, options.noise_max};

  Hyperparameters first = options.initial ? *options.initial : prior_medians(D, priors);
  require(first.outputs() == D, "initial hyperparameters have the wrong output count");
  const Coregionalization fixed_coreg = first.coreg;
  const int coreg_begin = 5;
  const int coreg_end = 5 + D * (D + 1) / 2;

  auto objective = [&](const VectorXd& z, VectorXd& grad) -> double {
    grad = VectorXd::Zero(z.size());
    try {
      const Hyperparameters hp = tf.from_z(z);
      auto vg = log_posterior_gradient(data, hp, &priors, options.learn_coregionalization);
      if (!std::isfinite(vg.value)) return std::numeric_limits<double>::infinity();
      grad = -vg.gradient;
      tf.chain(z, grad);
      if (!options.learn_coregionalization) grad.segment(coreg_begin, coreg_end - coreg_begin).setZero();
      return -vg.value;
    } catch (const NumericalError&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  Rng rng(derive_seed(options.seed, {stream::kHyperFit}));
  FitResult best;
  best.log_density = -std::numeric_limits<double>::infinity();
  bool found = false;
  for (int r = 0; r < options.restarts; ++r) {
    Hyperparameters start = r == 0 ? first : random_start(D, priors, rng, options.learn_coregionalization, fixed_coreg);
    const auto res = detail::minimize_bfgs(objective, tf.to_z(start), options.max_iterations);
    if (!std::isfinite(res.value)) continue;
    const double density = -res.value;
    if (!found || density > best.log_density) {
      best.params = tf.from_z(res.x);
      best.log_density = density;
      found = true;
    }
  }
  if (!found) {
    best.params = prior_medians(D, priors);
    if (!options.learn_coregionalization) best.params.coreg = fixed_coreg;
    best.fell_back = true;
    best.warning = "MAP fit failed from every restart; using prior medians";
    try {
      best.log_density = log_marginal_likelihood(data, best.params) +
                         priors.log_density(best.params, options.learn_coregionalization);
    } catch (const NumericalError&) {
      best.log_density = -std::numeric_limits<double>::infinity();
    }
  }
  return best;
}

}  // namespace robustpo::gp
