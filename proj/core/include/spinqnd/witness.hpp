#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "spinqnd/estimator.hpp"

namespace spinqnd {

struct WitnessReport {
  double n_atoms = 0.0;
  double total_variation = 0.0;
  double xi_squared = 0.0;
  double squeezing_db = 0.0;
  double entangled_lower_bound = 0.0;
  Vec3 per_component_variance = Vec3::Zero();
};

/// xi^2 = |Delta J|^2 / (N_A / 2). Throws std::invalid_argument for n_atoms <= 0.
double squeezing_parameter(double total_variation, double n_atoms);

/// -10 log10(xi^2), power decibels.
double squeezing_db(double xi_squared);

/// max(0, (1 - xi^2) N_A).
double entangled_bound(double xi_squared, double n_atoms);

WitnessReport witness_report(const Mat3& covariance, double n_atoms);

/// Singlet-triplet conversion frequency gamma * B' * dz (rad/s).
double gradient_omega(double gamma, double b_prime, double delta_z);

/// r.m.s. separation of uniformly placed pairs in a cell of the given length.
double rms_pair_separation(double cell_length);

/// added_rate / (gamma * b_prime). Throws std::invalid_argument unless both
/// gamma and b_prime are > 0.
double singlet_separation_estimate(double added_rate, double gamma, double b_prime);

struct DecayFit {
  double rate = 0.0;         // 1/s
  double uncertainty = 0.0;  // 1/s, one standard error
  double initial_variance = 0.0;
  /// Set when the series carries no decay information; rate is then 0 and
  /// uncertainty infinite.
  bool constant_series = false;
};

/// Fits V(t) = asymptote - (asymptote - V0) exp(-r (t - t_0)) over (V0, r).
/// Requires >= 4 points, ascending times and asymptote > 0. Throws
/// NumericalError on non-convergence.
DecayFit decay_fit(std::span<const double> times, std::span<const double> variances,
                   double asymptote);

enum class GradientMode {
  /// Added rate enters both longitudinal and transverse relaxation.
  isotropic,
  /// Added rate enters the transverse relaxation only.
  transverse,
};

struct GradientScanConfig {
  /// Spread of singlet separations (m); defaults to the r.m.s. pair
  /// separation of the cell.
  std::optional<double> delta_z;
  /// Gyromagnetic ratio converting B' dz into a rate; defaults to gamma_e / q.
  std::optional<double> gamma;
  GradientMode mode = GradientMode::isotropic;
  /// Free-evolution span sampled after the last observation (s).
  double duration = 2e-3;
  std::size_t series_points = 200;
  KalmanOptions kalman;
  unsigned jobs = 1;
};

struct GradientScanResult {
  double gradient = 0.0;    // T/m
  double added_rate = 0.0;  // injected variance relaxation rate, 1/s
  double decay_rate = 0.0;
  double rate_uncertainty = 0.0;
  /// Steady-state posterior variances while probing under this gradient.
  Vec3 per_component_variance = Vec3::Zero();
  /// (time since last observation, |Delta J|^2) during free evolution.
  std::vector<std::pair<double, double>> variance_series;
};

/// Relaxation rates with the gradient channel switched on. The amplitude rates
/// grow by added_rate / 2 so that variances relax faster by added_rate.
RelaxationRates gradient_rates(const RelaxationRates& base, double added_rate, GradientMode mode);

/// For each gradient: steady-state covariance under continuous probing, then
/// prediction-only evolution of Tr[Sigma], fitted by decay_fit toward TSS.
/// Results follow the input order. Throws std::invalid_argument for negative
/// gradients.
std::vector<GradientScanResult> gradient_scan(const SystemModel& base,
                                              std::span<const double> gradients,
                                              const GradientScanConfig& config);

}  // namespace spinqnd
