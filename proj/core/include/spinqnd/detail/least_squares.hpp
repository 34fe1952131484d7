#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

namespace spinqnd::detail {

struct LeastSquaresOptions {
  int max_iterations = 200;
  /// Largest cosine between the residual and any Jacobian column.
  double gradient_tolerance = 1e-10;
  double step_tolerance = 1e-14;
};

template <int P>
struct LeastSquaresResult {
  Eigen::Matrix<double, P, 1> params;
  Eigen::Matrix<double, P, P> covariance;
  double rss = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Damped Gauss-Newton (Levenberg-Marquardt with Marquardt diagonal scaling).
///
/// `eval(x, r, J)` fills residuals and the analytic Jacobian and returns false
/// when x lies outside the model's domain; such trial steps are rejected.
/// The returned covariance is s^2 (J^T J)^-1 with s^2 = rss / (n - P).
template <int P, class Eval>
LeastSquaresResult<P> levenberg_marquardt(Eval&& eval, Eigen::Matrix<double, P, 1> x,
                                          const LeastSquaresOptions& opts = {}) {
  using Vec = Eigen::Matrix<double, P, 1>;
  using Mat = Eigen::Matrix<double, P, P>;
  using Jac = Eigen::Matrix<double, Eigen::Dynamic, P>;

  Eigen::VectorXd r;
  Jac jac;
  LeastSquaresResult<P> out;
  if (!eval(x, r, jac)) {
    out.params = x;
    return out;
  }
  double cost = r.squaredNorm();
  double lambda = 1e-3;

  Eigen::VectorXd r_trial;
  Jac jac_trial;
  for (int it = 0; it < opts.max_iterations; ++it) {
    out.iterations = it + 1;
    const Vec grad = jac.transpose() * r;
    const double rnorm = r.norm();
    double worst_cos = 0.0;
    for (int i = 0; i < P; ++i) {
      const double cn = jac.col(i).norm();
      if (cn > 0.0 && rnorm > 0.0) {
        worst_cos = std::max(worst_cos, std::abs(grad[i]) / (cn * rnorm));
      }
    }
    if (rnorm == 0.0 || worst_cos <= opts.gradient_tolerance) {
      out.converged = true;
      break;
    }

    const Mat jtj = jac.transpose() * jac;
    bool accepted = false;
    while (!accepted) {
      Mat damped = jtj;
      for (int i = 0; i < P; ++i) {
        damped(i, i) += lambda * std::max(jtj(i, i), 1e-300);
      }
      const Vec step = damped.ldlt().solve(-grad);
      const Vec trial = x + step;
      if (step.allFinite() && eval(trial, r_trial, jac_trial)) {
        const double trial_cost = r_trial.squaredNorm();
        if (trial_cost <= cost) {
          const bool tiny_step = step.norm() <= opts.step_tolerance * (x.norm() + opts.step_tolerance);
          x = trial;
          r.swap(r_trial);
          jac.swap(jac_trial);
          cost = trial_cost;
          lambda = std::max(lambda / 10.0, 1e-12);
          accepted = true;
          if (tiny_step) {
            out.converged = true;
          }
          continue;
        }
      }
      lambda *= 10.0;
      if (lambda > 1e16) {
        // No descent direction left at working precision.
        out.converged = true;
        break;
      }
    }
    if (out.converged) {
      break;
    }
  }

  out.params = x;
  out.rss = cost;
  const auto n = static_cast<double>(r.size());
  const double s2 = n > P ? cost / (n - P) : std::numeric_limits<double>::infinity();
  // column-equilibrate so that parameters of very different magnitude do not
  // look rank deficient
  Eigen::Matrix<double, P, 1> scale = jac.colwise().norm().transpose();
  for (int i = 0; i < P; ++i) {
    if (!(scale[i] > 0.0)) scale[i] = 1.0;
  }
  const auto jac_scaled = jac * scale.cwiseInverse().asDiagonal();
  const Mat jtj = jac_scaled.transpose() * jac_scaled;
  Eigen::FullPivLU<Mat> lu(jtj);
  if (lu.isInvertible()) {
    const auto inv_scale = scale.cwiseInverse().asDiagonal();
    out.covariance = s2 * (inv_scale * lu.inverse() * inv_scale);
  } else {
    out.covariance.setConstant(std::numeric_limits<double>::infinity());
  }
  return out;
}

}  // namespace spinqnd::detail
