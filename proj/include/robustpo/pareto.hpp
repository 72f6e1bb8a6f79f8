#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "robustpo/gp.hpp"
#include "robustpo/types.hpp"

namespace robustpo::pareto {

/// Weak dominance under maximization: a >= b componentwise.
bool dominates(const ObjectiveVector& a, const ObjectiveVector& b);
bool strictly_dominates(const ObjectiveVector& a, const ObjectiveVector& b);

/// Mutually non-dominated points sorted by ascending performance
/// (hence descending robustness).
class ParetoFront {
 public:
  ParetoFront() = default;
  /// Throws if `sorted_points` is not a sorted, mutually non-dominated list.
  explicit ParetoFront(std::vector<ObjectiveVector> sorted_points);

  const std::vector<ObjectiveVector>& points() const { return points_; }
  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  const ObjectiveVector& operator[](std::size_t i) const { return points_[i]; }

 private:
  std::vector<ObjectiveVector> points_;
};

struct Extraction {
  ParetoFront front;
  std::vector<std::size_t> indices;  // into the input list, first occurrence of duplicates
};

/// Points not strictly dominated by any other; exact duplicates collapsed.
Extraction pareto_extract_indexed(const std::vector<ObjectiveVector>& ys);
ParetoFront pareto_extract(const std::vector<ObjectiveVector>& ys);

/// Area of the union of boxes [r, p] over the front (staircase sweep).
double hypervolume_2d(const ParetoFront& front, const ObjectiveVector& reference);

/// HV(front + y) - HV(front), computed cell by cell.
double hv_improvement(const ObjectiveVector& y, const ParetoFront& front, const ObjectiveVector& reference);

/// Standard normal CDF and PDF.
double normal_cdf(double z);
double normal_pdf(double z);

/// E[(X - c)^+] for X ~ N(mean, std^2); the exact limit (mean - c)^+ when std == 0.
double expected_excess(double mean, double std, double c);

/// Expected hypervolume improvement under independent Gaussian marginals
/// (the diagonal of `posterior.covariance`).
double ehi(const gp::Posterior& posterior, const ParetoFront& front, const ObjectiveVector& reference);
double ehi(double mean_perf, double std_perf, double mean_rob, double std_rob, const ParetoFront& front,
           const ObjectiveVector& reference);

/// Scalar expected improvement over `best`.
double ei(double mean, double std, double best);

void write_front_csv(std::ostream& os, const ParetoFront& front);

}  // namespace robustpo::pareto
