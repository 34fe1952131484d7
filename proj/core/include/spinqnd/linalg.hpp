#pragma once

#include "spinqnd/types.hpp"

namespace spinqnd::linalg {

/// Matrix with (m v) == b x v for every v.
Mat3 cross_matrix(const Vec3& b);

Mat3 expm(const Mat3& a);

inline Mat3 symmetrized(const Mat3& a) { return 0.5 * (a + a.transpose()); }

/// Symmetric square root S (S S^T = a) via eigendecomposition. Eigenvalues in
/// [-rel_tol * |trace|, 0) are clamped to zero; anything more negative throws
/// NumericalError.
Mat3 psd_sqrt(const Mat3& a, double rel_tol = 1e-12);

/// Smallest eigenvalue of the symmetric part of a.
double min_eigenvalue(const Mat3& a);

/// True when a is symmetric and its eigenvalues are >= -rel_tol * |trace|.
bool is_psd(const Mat3& a, double rel_tol = 1e-10);

}  // namespace spinqnd::linalg
