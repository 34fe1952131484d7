#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace spinqnd {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Row3 = Eigen::RowVector3d;

/// Raised when a numerical procedure cannot produce a trustworthy result
/// (indefinite covariance, fit divergence, missing steady state).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace spinqnd
