#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "spinqnd/simulator.hpp"

namespace spinqnd {

struct FilterState {
  Vec3 estimate = Vec3::Zero();
  Mat3 covariance = Mat3::Zero();
  std::size_t time_index = 0;
};

struct KalmanOptions {
  /// Relative Frobenius change of the posterior covariance counted as "still".
  double steady_tolerance = 1e-9;
  /// Consecutive still steps required to declare a steady state.
  std::size_t steady_window = 100;
  /// kf_run throws NumericalError when the record ends before steady state.
  bool require_steady_state = true;
};

struct FilterRun {
  /// Posterior (k|k) states, one per record sample.
  std::vector<FilterState> states;
  /// (obs - H prior) / sqrt(R + H Sigma H^T), one per record sample.
  std::vector<double> normalized_innovations;
  Mat3 steady_state_covariance = Mat3::Zero();
  std::optional<std::size_t> converged_at;
};

FilterState kf_predict(const FilterState& prev, const DiscreteModel& dm);

/// Scalar-observation update with explicit observation row and noise power.
/// Joseph-form covariance; throws std::invalid_argument for non-finite obs or
/// noise_power <= 0.
FilterState kf_update(const FilterState& prior, double obs, const Row3& h, double noise_power);

FilterState kf_update(const FilterState& prior, double obs, const MeasurementModel& m);

/// Runs predict/update over the record. The prior describes J at the first
/// sample time, so sample 0 is an update without a preceding prediction.
FilterRun kf_run(const PhotocurrentRecord& record, const DiscreteModel& dm,
                 const MeasurementModel& m, const Vec3& init_mean, const Mat3& init_cov,
                 const KalmanOptions& options = {});

struct SteadyState {
  Mat3 covariance = Mat3::Zero();
  std::size_t steps = 0;
};

/// Data-free posterior covariance recursion iterated until the kf_run steady
/// state criterion holds. Throws NumericalError after max_steps.
SteadyState steady_state_covariance(const DiscreteModel& dm, const MeasurementModel& m,
                                    const Mat3& init_cov, const KalmanOptions& options = {},
                                    std::size_t max_steps = 50'000'000);

/// |Delta J|^2 = Tr[cov].
double total_variation(const Mat3& cov);

/// Per-component mean squared error between posterior estimates and truth,
/// averaged from the convergence index (or from the start if never converged).
Vec3 rms_estimation_error(const FilterRun& run, const SpinTrajectory& truth);

}  // namespace spinqnd
