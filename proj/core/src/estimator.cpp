#include "spinqnd/estimator.hpp"

#include <cmath>
#include <stdexcept>

#include "spinqnd/linalg.hpp"

namespace spinqnd {
namespace {

Mat3 predict_covariance(const Mat3& cov, const DiscreteModel& dm) {
  return linalg::symmetrized(dm.phi * cov * dm.phi.transpose() + dm.q_delta);
}

struct Gain {
  Vec3 k;
  double innovation_variance;
};

Gain kalman_gain(const Mat3& cov, const Row3& h, double noise_power) {
  const Vec3 ph = cov * h.transpose();
  const double s = noise_power + h.dot(ph);
  return {ph / s, s};
}

Mat3 joseph_update(const Mat3& cov, const Gain& g, const Row3& h, double noise_power) {
  const Mat3 a = Mat3::Identity() - g.k * h;
  return linalg::symmetrized(a * cov * a.transpose() +
                             noise_power * (g.k * g.k.transpose()));
}

/// Tracks the "still for N consecutive steps" steady-state criterion.
class SteadyDetector {
 public:
  explicit SteadyDetector(const KalmanOptions& o) : opts_(o) {}

  /// Returns true on the step that completes the window.
  bool observe(const Mat3& prev, const Mat3& next) {
    const double denom = next.norm();
    const double change = (next - prev).norm();
    const bool still = denom > 0.0 ? change <= opts_.steady_tolerance * denom : change == 0.0;
    run_ = still ? run_ + 1 : 0;
    return run_ >= opts_.steady_window;
  }
  [[nodiscard]] std::size_t run_length() const { return run_; }

 private:
  KalmanOptions opts_;
  std::size_t run_ = 0;
};

}  // namespace

FilterState kf_predict(const FilterState& prev, const DiscreteModel& dm) {
  return {dm.phi * prev.estimate, predict_covariance(prev.covariance, dm), prev.time_index + 1};
}

FilterState kf_update(const FilterState& prior, double obs, const Row3& h, double noise_power) {
  if (!std::isfinite(obs)) {
    throw std::invalid_argument("kf_update: observation is not finite");
  }
  if (!(noise_power > 0.0)) {
    throw std::invalid_argument("kf_update: observation noise power must be > 0");
  }
  const Gain g = kalman_gain(prior.covariance, h, noise_power);
  FilterState post;
  post.time_index = prior.time_index;
  post.estimate = prior.estimate + g.k * (obs - h.dot(prior.estimate));
  post.covariance = joseph_update(prior.covariance, g, h, noise_power);
  return post;
}

FilterState kf_update(const FilterState& prior, double obs, const MeasurementModel& m) {
  return kf_update(prior, obs, m.observation_row(), m.noise_power());
}

FilterRun kf_run(const PhotocurrentRecord& record, const DiscreteModel& dm,
                 const MeasurementModel& m, const Vec3& init_mean, const Mat3& init_cov,
                 const KalmanOptions& options) {
  if (record.size() == 0) {
    throw std::invalid_argument("kf_run: empty photocurrent record");
  }
  if (!linalg::is_psd(init_cov)) {
    throw std::invalid_argument("kf_run: initial covariance must be symmetric PSD");
  }
  const Row3 h = m.observation_row();
  const double r = m.noise_power();

  FilterRun run;
  run.states.reserve(record.size());
  run.normalized_innovations.reserve(record.size());
  SteadyDetector detector(options);

  FilterState prior{init_mean, init_cov, 0};
  for (std::size_t k = 0; k < record.size(); ++k) {
    if (k > 0) {
      prior = kf_predict(run.states.back(), dm);
    }
    const double s = r + h.dot(prior.covariance * h.transpose());
    run.normalized_innovations.push_back((record.samples[k] - h.dot(prior.estimate)) /
                                         std::sqrt(s));
    run.states.push_back(kf_update(prior, record.samples[k], h, r));

    if (k > 0 && !run.converged_at &&
        detector.observe(run.states[k - 1].covariance, run.states[k].covariance)) {
      run.converged_at = k + 1 - detector.run_length();
      run.steady_state_covariance = run.states[k].covariance;
    }
  }
  if (!run.converged_at) {
    if (options.require_steady_state) {
      throw NumericalError("kf_run: covariance did not reach a steady state within the record");
    }
    run.steady_state_covariance = run.states.back().covariance;
  }
  return run;
}

SteadyState steady_state_covariance(const DiscreteModel& dm, const MeasurementModel& m,
                                    const Mat3& init_cov, const KalmanOptions& options,
                                    std::size_t max_steps) {
  const Row3 h = m.observation_row();
  const double r = m.noise_power();
  if (!(r > 0.0)) {
    throw std::invalid_argument("steady_state_covariance: observation noise power must be > 0");
  }
  SteadyDetector detector(options);
  Mat3 post = joseph_update(init_cov, kalman_gain(init_cov, h, r), h, r);
  for (std::size_t k = 1; k <= max_steps; ++k) {
    const Mat3 prior = predict_covariance(post, dm);
    const Mat3 next = joseph_update(prior, kalman_gain(prior, h, r), h, r);
    const bool done = detector.observe(post, next);
    post = next;
    if (done) {
      return {post, k};
    }
  }
  throw NumericalError("steady_state_covariance: no steady state within the step budget");
}

double total_variation(const Mat3& cov) { return cov.trace(); }

Vec3 rms_estimation_error(const FilterRun& run, const SpinTrajectory& truth) {
  if (run.states.size() != truth.size()) {
    throw std::invalid_argument("rms_estimation_error: filter run and trajectory lengths differ");
  }
  const std::size_t start = run.converged_at.value_or(0);
  if (start >= run.states.size()) {
    throw std::invalid_argument("rms_estimation_error: no samples after convergence");
  }
  Vec3 acc = Vec3::Zero();
  for (std::size_t k = start; k < run.states.size(); ++k) {
    acc += (run.states[k].estimate - truth.spins[k]).cwiseAbs2();
  }
  return acc / static_cast<double>(run.states.size() - start);
}

}  // namespace spinqnd
