#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace robustpo {

using Vector4 = Eigen::Matrix<double, 4, 1>;

/// Raised when a linear-algebra or integration step cannot produce a finite answer.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Linear state-feedback gains [alpha, beta, omega, phi] -> volts.
struct ControllerGains {
  Vector4 theta = Vector4::Zero();

  ControllerGains() = default;
  explicit ControllerGains(const Vector4& t) : theta(t) {}
  ControllerGains(double a, double b, double c, double d) { theta << a, b, c, d; }

  double operator[](int i) const { return theta[i]; }
  double& operator[](int i) { return theta[i]; }
  bool operator==(const ControllerGains& o) const { return theta == o.theta; }
};

/// Scaled (performance, robustness) pair. Both coordinates are maximized.
struct ObjectiveVector {
  double performance = 0.0;
  double robustness = 0.0;

  bool operator==(const ObjectiveVector&) const = default;
};

inline ObjectiveVector operator+(ObjectiveVector a, const ObjectiveVector& b) {
  return {a.performance + b.performance, a.robustness + b.robustness};
}

}  // namespace robustpo
