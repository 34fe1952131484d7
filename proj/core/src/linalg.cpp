#include "spinqnd/linalg.hpp"

#include <cmath>

#include <unsupported/Eigen/MatrixFunctions>

namespace spinqnd::linalg {

Mat3 cross_matrix(const Vec3& b) {
  Mat3 m;
  m << 0.0, -b.z(), b.y(),
       b.z(), 0.0, -b.x(),
      -b.y(), b.x(), 0.0;
  return m;
}

Mat3 expm(const Mat3& a) { return a.exp(); }

double min_eigenvalue(const Mat3& a) {
  Eigen::SelfAdjointEigenSolver<Mat3> es(symmetrized(a), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

bool is_psd(const Mat3& a, double rel_tol) {
  const double scale = std::max(std::abs(a.trace()), a.cwiseAbs().maxCoeff());
  if (!(a - a.transpose()).isZero(1e-12 * std::max(scale, 1e-300))) {
    return false;
  }
  return min_eigenvalue(a) >= -rel_tol * scale;
}

Mat3 psd_sqrt(const Mat3& a, double rel_tol) {
  const Mat3 s = symmetrized(a);
  if (!s.allFinite()) {
    throw NumericalError("psd_sqrt: matrix has non-finite entries");
  }
  Eigen::SelfAdjointEigenSolver<Mat3> es(s);
  Vec3 ev = es.eigenvalues();
  const double tol = rel_tol * std::abs(s.trace());
  for (int i = 0; i < 3; ++i) {
    if (ev[i] < 0.0) {
      if (ev[i] < -tol) {
        throw NumericalError("psd_sqrt: matrix is indefinite beyond tolerance");
      }
      ev[i] = 0.0;
    }
  }
  const Mat3& v = es.eigenvectors();
  return v * ev.cwiseSqrt().asDiagonal() * v.transpose();
}

}  // namespace spinqnd::linalg
