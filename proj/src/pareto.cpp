#include "robustpo/pareto.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace robustpo::pareto {

bool dominates(const ObjectiveVector& a, const ObjectiveVector& b) {
  return a.performance >= b.performance && a.robustness >= b.robustness;
}

bool strictly_dominates(const ObjectiveVector& a, const ObjectiveVector& b) {
  return dominates(a, b) && !(a == b);
}

ParetoFront::ParetoFront(std::vector<ObjectiveVector> sorted_points) : points_(std::move(sorted_points)) {
  for (const auto& p : points_)
    if (!std::isfinite(p.performance) || !std::isfinite(p.robustness))
      throw std::invalid_argument("front points must be finite");
  for (std::size_t i = 1; i < points_.size(); ++i) {
    if (!(points_[i - 1].performance < points_[i].performance && points_[i - 1].robustness > points_[i].robustness))
      throw std::invalid_argument("front points must be sorted and mutually non-dominated");
  }
}

Extraction pareto_extract_indexed(const std::vector<ObjectiveVector>& ys) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < ys.size(); ++i) {
    bool dominated = false;
    for (std::size_t j = 0; j < ys.size() && !dominated; ++j) {
      if (j == i) continue;
      if (strictly_dominates(ys[j], ys[i])) dominated = true;
      // duplicates: keep the first occurrence only
      if (j < i && ys[j] == ys[i]) dominated = true;
    }
    if (!dominated) keep.push_back(i);
  }
  std::stable_sort(keep.begin(), keep.end(),
                   [&](std::size_t a, std::size_t b) { return ys[a].performance < ys[b].performance; });
  Extraction out;
  std::vector<ObjectiveVector> pts;
  pts.reserve(keep.size());
  for (auto i : keep) pts.push_back(ys[i]);
  out.front = ParetoFront(std::move(pts));
  out.indices = std::move(keep);
  return out;
}

ParetoFront pareto_extract(const std::vector<ObjectiveVector>& ys) { return pareto_extract_indexed(ys).front; }

namespace {

void check_reference(const ParetoFront& front, const ObjectiveVector& r) {
  for (const auto& p : front.points())
    if (!dominates(p, r)) {
      std::ostringstream msg;
      msg << "front point (" << p.performance << ", " << p.robustness << ") does not dominate the reference ("
          << r.performance << ", " << r.robustness << ")";
      throw std::invalid_argument(msg.str());
    }
}

// Cell sum shared by the exact improvement and its expectation. The plane
// above r that the front does not dominate splits into vertical strips
// [a_i, a_{i+1}) x [h_i, inf) with a_0 = r1, a_{n+1} = inf, h_i = b_{i+1},
// h_n = r2. `excess1(c)` must return the integral of P(Y1 >= z) over z >= c.
template <typename Excess1, typename Excess2>
double strip_sum(const ParetoFront& front, const ObjectiveVector& r, Excess1 excess1, Excess2 excess2) {
  const auto& pts = front.points();
  const std::size_t n = pts.size();
  double total = 0.0;
  double lower_edge = r.performance;
  double e_lower = excess1(lower_edge);
  for (std::size_t i = 0; i <= n; ++i) {
    const double floor = i < n ? pts[i].robustness : r.robustness;
    const double e_upper = i < n ? excess1(pts[i].performance) : 0.0;
    const double width = e_lower - e_upper;
    if (width > 0.0) total += width * excess2(floor);
    if (i < n) e_lower = e_upper;
  }
  return std::max(total, 0.0);
}

}  // namespace

double hypervolume_2d(const ParetoFront& front, const ObjectiveVector& reference) {
  check_reference(front, reference);
  double hv = 0.0;
  double prev = reference.performance;
  for (const auto& p : front.points()) {
    hv += (p.performance - prev) * (p.robustness - reference.robustness);
    prev = p.performance;
  }
  return hv;
}

double hv_improvement(const ObjectiveVector& y, const ParetoFront& front, const ObjectiveVector& reference) {
  check_reference(front, reference);
  if (!std::isfinite(y.performance) || !std::isfinite(y.robustness))
    throw std::invalid_argument("hv_improvement: y must be finite");
  if (!dominates(y, reference)) throw std::invalid_argument("hv_improvement: y does not dominate the reference");
  auto e1 = [&](double c) { return std::max(y.performance - c, 0.0); };
  auto e2 = [&](double c) { return std::max(y.robustness - c, 0.0); };
  return strip_sum(front, reference, e1, e2);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z * std::numbers::sqrt2 / 2.0); }

double normal_pdf(double z) { return std::exp(-0.5 * z * z) * (std::numbers::inv_sqrtpi / std::numbers::sqrt2); }

double expected_excess(double mean, double std, double c) {
  const double d = mean - c;
  if (!(std > 0.0)) return std::max(d, 0.0);
  const double z = d / std;
  return std::max(d * normal_cdf(z) + std * normal_pdf(z), 0.0);
}

double ehi(double mean_perf, double std_perf, double mean_rob, double std_rob, const ParetoFront& front,
           const ObjectiveVector& reference) {
  check_reference(front, reference);
  auto e1 = [&](double c) { return expected_excess(mean_perf, std_perf, c); };
  auto e2 = [&](double c) { return expected_excess(mean_rob, std_rob, c); };
  return strip_sum(front, reference, e1, e2);
}

double ehi(const gp::Posterior& posterior, const ParetoFront& front, const ObjectiveVector& reference) {
  if (posterior.mean.size() != 2 || posterior.covariance.rows() != 2)
    throw std::invalid_argument("ehi needs a two-output posterior");
  const double s1 = std::sqrt(std::max(posterior.covariance(0, 0), 0.0));
  const double s2 = std::sqrt(std::max(posterior.covariance(1, 1), 0.0));
  return ehi(posterior.mean[0], s1, posterior.mean[1], s2, front, reference);
}

double ei(double mean, double std, double best) { return expected_excess(mean, std, best); }

void write_front_csv(std::ostream& os, const ParetoFront& front) {
  os << "performance,robustness\n";
  os.precision(17);
  for (const auto& p : front.points()) os << p.performance << ',' << p.robustness << '\n';
}

}  // namespace robustpo::pareto
