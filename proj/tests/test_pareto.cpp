#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "robustpo/pareto.hpp"

using namespace robustpo;
using namespace robustpo::pareto;

namespace {

std::vector<ObjectiveVector> random_points(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<ObjectiveVector> out;
  for (int i = 0; i < n; ++i) out.push_back({u(rng), u(rng)});
  return out;
}

// Brute-force non-dominated filter (keeps first of exact duplicates).
std::vector<ObjectiveVector> brute_front(const std::vector<ObjectiveVector>& ys) {
  std::vector<ObjectiveVector> out;
  for (std::size_t i = 0; i < ys.size(); ++i) {
    bool keep = true;
    for (std::size_t j = 0; j < ys.size() && keep; ++j) {
      const bool ge = ys[j].performance >= ys[i].performance && ys[j].robustness >= ys[i].robustness;
      const bool ne = !(ys[j] == ys[i]);
      if (ge && ne) keep = false;
      if (ys[j] == ys[i] && j < i) keep = false;
    }
    if (keep) out.push_back(ys[i]);
  }
  std::sort(out.begin(), out.end(), [](auto& a, auto& b) { return a.performance < b.performance; });
  return out;
}

bool in_union(const std::vector<ObjectiveVector>& pts, double x, double y) {
  for (const auto& p : pts)
    if (x <= p.performance && y <= p.robustness) return true;
  return false;
}

// Monte-Carlo area of the dominated region inside the unit square, with its standard error.
std::pair<double, double> mc_area(const std::vector<ObjectiveVector>& pts, int samples, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int hits = 0;
  for (int s = 0; s < samples; ++s)
    if (in_union(pts, u(rng), u(rng))) ++hits;
  const double p = static_cast<double>(hits) / samples;
  return {p, std::sqrt(p * (1 - p) / samples)};
}

}  // namespace

TEST(Dominance, Examples) {
  EXPECT_TRUE(dominates({0.9, 0.9}, {0.1, 0.1}));
  EXPECT_FALSE(dominates({0.9, 0.1}, {0.1, 0.9}));
  EXPECT_TRUE(dominates({0.5, 0.5}, {0.5, 0.5}));
  EXPECT_FALSE(strictly_dominates({0.5, 0.5}, {0.5, 0.5}));
  EXPECT_TRUE(strictly_dominates({0.5, 0.6}, {0.5, 0.5}));
}

TEST(ParetoExtract, Examples) {
  EXPECT_TRUE(pareto_extract({}).empty());
  const auto f = pareto_extract({{1, 0}, {0, 1}, {0.5, 0.5}, {0.2, 0.2}});
  ASSERT_EQ(f.size(), 3u);
  EXPECT_EQ(f[0], (ObjectiveVector{0, 1}));
  EXPECT_EQ(f[1], (ObjectiveVector{0.5, 0.5}));
  EXPECT_EQ(f[2], (ObjectiveVector{1, 0}));
  const auto s = pareto_extract({{0.3, 0.7}});
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0], (ObjectiveVector{0.3, 0.7}));
}

TEST(ParetoExtract, CollapsesDuplicatesKeepingFirstIndex) {
  const auto ex = pareto_extract_indexed({{0.2, 0.2}, {0.5, 0.5}, {0.5, 0.5}, {0.1, 0.9}});
  ASSERT_EQ(ex.front.size(), 2u);
  EXPECT_EQ(ex.indices, (std::vector<std::size_t>{3, 1}));
}

TEST(ParetoExtract, MatchesBruteForceAndIsIdempotent) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 200; ++t) {
    auto ys = random_points(rng, 1 + t % 15);
    if (t % 3 == 0) ys.push_back(ys.front());
    const auto f = pareto_extract(ys);
    EXPECT_EQ(f.points(), brute_front(ys));
    EXPECT_EQ(pareto_extract(f.points()).points(), f.points());
  }
}

TEST(ParetoFront, RejectsDominatedOrUnsortedInput) {
  EXPECT_THROW(ParetoFront({{0.5, 0.5}, {0.6, 0.6}}), std::invalid_argument);
  EXPECT_THROW(ParetoFront({{0.6, 0.4}, {0.5, 0.5}}), std::invalid_argument);
  EXPECT_NO_THROW(ParetoFront({{0.5, 0.5}, {0.6, 0.4}}));
}

TEST(Hypervolume, Examples) {
  EXPECT_DOUBLE_EQ(hypervolume_2d(pareto_extract({{1, 1}}), {0, 0}), 1.0);
  EXPECT_DOUBLE_EQ(hypervolume_2d(pareto_extract({{1, 2}, {2, 1}}), {0, 0}), 3.0);
  EXPECT_EQ(hypervolume_2d(ParetoFront(), {0, 0}), 0.0);
}

TEST(Hypervolume, RequiresReferenceToBeDominated) {
  EXPECT_THROW(hypervolume_2d(pareto_extract({{0.5, 0.5}}), {0.6, 0.0}), std::invalid_argument);
}

TEST(Hypervolume, MatchesMonteCarloArea) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 5; ++t) {
    const auto ys = random_points(rng, 8);
    const auto [area, se] = mc_area(ys, 1'000'000, rng);
    EXPECT_NEAR(hypervolume_2d(pareto_extract(ys), {0, 0}), area, 3.0 * se + 1e-12);
  }
}

TEST(Hypervolume, MonotoneUnderInsertion) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    auto ys = random_points(rng, 1 + t % 9);
    const double before = hypervolume_2d(pareto_extract(ys), {0, 0});
    ys.push_back({u(rng), u(rng)});
    EXPECT_GE(hypervolume_2d(pareto_extract(ys), {0, 0}), before);
  }
}

TEST(HvImprovement, Examples) {
  const auto f = pareto_extract({{0.5, 0.5}});
  EXPECT_EQ(hv_improvement({0.3, 0.3}, f, {0, 0}), 0.0);
  EXPECT_DOUBLE_EQ(hv_improvement({0.5, 0.5}, ParetoFront(), {0, 0}), 0.25);
}

TEST(HvImprovement, EqualsDifferenceOfHypervolumes) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 500; ++t) {
    auto ys = random_points(rng, t % 10);
    const ObjectiveVector y{u(rng), u(rng)};
    const auto f = pareto_extract(ys);
    const double base = hypervolume_2d(f, {0, 0});
    ys.push_back(y);
    EXPECT_NEAR(hv_improvement(y, f, {0, 0}), hypervolume_2d(pareto_extract(ys), {0, 0}) - base, 1e-12);
  }
}

TEST(HvImprovement, ZeroWhenWeaklyDominated) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    const auto f = pareto_extract(random_points(rng, 1 + t % 8));
    const auto& p = f[t % f.size()];
    EXPECT_EQ(hv_improvement({p.performance * u(rng), p.robustness * u(rng)}, f, {0, 0}), 0.0);
    EXPECT_EQ(hv_improvement(p, f, {0, 0}), 0.0);
  }
}

TEST(HvImprovement, TranslationInvariant) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 100; ++t) {
    const auto ys = random_points(rng, 6);
    const ObjectiveVector y{u(rng), u(rng)};
    const ObjectiveVector shift{u(rng) - 0.5, u(rng) - 0.5};
    std::vector<ObjectiveVector> moved;
    for (const auto& p : ys) moved.push_back(p + shift);
    const auto f = pareto_extract(ys), g = pareto_extract(moved);
    EXPECT_NEAR(hypervolume_2d(f, {0, 0}), hypervolume_2d(g, shift), 1e-12);
    EXPECT_NEAR(hv_improvement(y, f, {0, 0}), hv_improvement(y + shift, g, shift), 1e-12);
  }
}

TEST(NormalCdf, TailsAndSymmetry) {
  EXPECT_DOUBLE_EQ(normal_cdf(0.0), 0.5);
  EXPECT_NEAR(normal_cdf(1.0), 0.8413447460685429, 1e-15);
  EXPECT_NEAR(normal_cdf(-8.0), 6.220960574271785e-16, 1e-25);
  for (double z = -6; z <= 6; z += 0.25) EXPECT_NEAR(normal_cdf(z) + normal_cdf(-z), 1.0, 1e-15);
  EXPECT_NEAR(normal_pdf(0.0), 1.0 / std::sqrt(2.0 * M_PI), 1e-16);
}

TEST(Ei, Examples) {
  EXPECT_DOUBLE_EQ(ei(0.7, 0.0, 0.5), 0.2);
  EXPECT_EQ(ei(0.3, 0.0, 0.5), 0.0);
  std::mt19937_64 rng(7);
  std::normal_distribution<double> z(0.0, 1.0);
  const int n = 1'000'000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = std::max(z(rng), 0.0);
    s += v;
    s2 += v * v;
  }
  const double mean = s / n, se = std::sqrt((s2 / n - mean * mean) / n);
  EXPECT_NEAR(ei(0.5, 1.0, 0.5), mean, 3 * se);
  EXPECT_NEAR(ei(0.5, 1.0, 0.5), 1.0 / std::sqrt(2.0 * M_PI), 1e-15);
}

TEST(Ehi, PointMassLimitEqualsHvImprovement) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    const auto f = pareto_extract(random_points(rng, t % 6));
    const ObjectiveVector m{u(rng), u(rng)};
    EXPECT_NEAR(ehi(m.performance, 1e-13, m.robustness, 1e-13, f, {0, 0}), hv_improvement(m, f, {0, 0}), 1e-6);
  }
}

TEST(Ehi, NegligibleDeepInsideDominatedRegion) {
  const auto f = pareto_extract({{0.9, 0.9}});
  EXPECT_LE(ehi(0.3, 0.05, 0.3, 0.05, f, {0, 0}), 1e-6);
}

TEST(Ehi, MatchesMonteCarlo) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> z(0.0, 1.0);
  int ok = 0;
  const int cases = 20;
  for (int t = 0; t < cases; ++t) {
    const auto f = pareto_extract(random_points(rng, 5));
    const double m1 = u(rng), m2 = u(rng), s1 = 0.05 + 0.3 * u(rng), s2 = 0.05 + 0.3 * u(rng);
    const int n = 100'000;
    double s = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
      // draws below r contribute nothing; clamp onto r so the improvement is defined
      const ObjectiveVector y{std::max(0.0, m1 + s1 * z(rng)), std::max(0.0, m2 + s2 * z(rng))};
      const double hi = hv_improvement(y, f, {0, 0});
      s += hi;
      sq += hi * hi;
    }
    const double mean = s / n, se = std::sqrt(std::max(sq / n - mean * mean, 0.0) / n);
    if (std::abs(ehi(m1, s1, m2, s2, f, {0, 0}) - mean) <= 3 * se + 1e-12) ++ok;
  }
  EXPECT_GE(ok, 18);
}

TEST(Ehi, NonNegativeAndUsesPosteriorDiagonal) {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 100; ++t) {
    const auto f = pareto_extract(random_points(rng, 4));
    gp::Posterior p;
    p.mean = Eigen::Vector2d(u(rng), u(rng));
    p.covariance = Eigen::Matrix2d::Zero();
    p.covariance(0, 0) = 0.04;
    p.covariance(1, 1) = 0.09;
    p.covariance(0, 1) = p.covariance(1, 0) = 0.03;
    const double v = ehi(p, f, {0, 0});
    EXPECT_GE(v, 0.0);
    EXPECT_DOUBLE_EQ(v, ehi(p.mean[0], 0.2, p.mean[1], 0.3, f, {0, 0}));
  }
}

TEST(Ehi, ConstantSecondObjectiveRanksLikeEi) {
  // one-point front (p0, c), robustness fixed at c: EHI = c * EI(perf; p0)
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 100; ++t) {
    const double p0 = u(rng), c = 0.2 + 0.6 * u(rng);
    const auto f = pareto_extract({{p0, c}});
    const double m = u(rng), s = 0.01 + 0.3 * u(rng);
    EXPECT_NEAR(ehi(m, s, c, 0.0, f, {0, 0}), c * ei(m, s, p0), 1e-12);
  }
}

TEST(FrontCsv, HeaderAndRows) {
  std::ostringstream os;
  write_front_csv(os, pareto_extract({{0.25, 0.75}, {0.5, 0.5}}));
  EXPECT_EQ(os.str(), "performance,robustness\n0.25,0.75\n0.5,0.5\n");
}
