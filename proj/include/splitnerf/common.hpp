// splitnerf is Copyright(c) 2026 the splitnerf authors.
// The splitnerf source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace splitnerf {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
// n x 3 blocks of per-sample / per-ray RGB or positions.
using MatX3 = Eigen::Matrix<double, Eigen::Dynamic, 3>;

// Invalid user-supplied data (bad file, bad argument, mismatched shapes).
class InputError : public std::runtime_error {
 public:
  explicit InputError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite value produced somewhere in the numeric pipeline. Carries the
// name of the operation that detected it.
class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& op, const std::string& what)
      : std::runtime_error(op + ": " + what), operation(op) {}
  std::string operation;
};

// Numerically stable softplus and its inverse. softplus(z) > 0 for all z.
inline double softplus(double z) {
  if (z > 30.0) return z;
  if (z < -30.0) return std::exp(z);
  return std::log1p(std::exp(z));
}

// d/dz softplus(z) = logistic(z)
inline double logistic(double z) {
  if (z >= 0.0) {
    const double e = std::exp(-z);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// z such that softplus(z) == y, y > 0.
inline double inverse_softplus(double y) {
  if (y > 30.0) return y;
  return std::log(std::expm1(y));
}

inline double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

template <class Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.derived().array().isFinite().all();
}

template <class Derived>
void require_finite(const Eigen::DenseBase<Derived>& m, const char* op) {
  if (!all_finite(m)) throw NumericError(op, "non-finite value");
}

inline void require_finite(double v, const char* op) {
  if (!std::isfinite(v)) throw NumericError(op, "non-finite value");
}

}  // namespace splitnerf
