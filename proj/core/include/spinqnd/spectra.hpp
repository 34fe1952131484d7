#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "spinqnd/physmodel.hpp"
#include "spinqnd/simulator.hpp"

namespace spinqnd {

/// One-sided power spectral density.
struct Spectrum {
  std::vector<double> frequencies;  // Hz
  std::vector<double> psd;          // signal^2 / Hz
  double resolution = 0.0;          // Hz
  std::size_t segments = 0;

  /// Sum of psd * resolution; equals the (mean-removed) signal variance.
  [[nodiscard]] double integrated_power() const;
};

/// Averaged Hann-windowed periodogram with per-segment mean removal. Throws
/// std::invalid_argument when the record is shorter than one segment.
Spectrum psd_welch(std::span<const double> samples, double delta, std::size_t segment_length,
                   double overlap_fraction = 0.5);
Spectrum psd_welch(const PhotocurrentRecord& record, std::size_t segment_length,
                   double overlap_fraction = 0.5);

struct FrequencyWindow {
  double lo = 0.0;
  double hi = 0.0;
};

struct LorentzianFit {
  double center = 0.0;     // Hz
  double fwhm = 0.0;       // Hz
  double amplitude = 0.0;  // psd units above the offset
  double offset = 0.0;
  double residual_rms = 0.0;
  /// False for spectra with no resolvable peak; fwhm is then 0.
  bool has_peak = false;
  int iterations = 0;
  FrequencyWindow window;
};

/// offset + amplitude (w/2)^2 / ((f - center)^2 + (w/2)^2), least squares
/// over the window. Without an explicit window the fit uses
/// [c - 5w, c + 5w] around the strongest non-DC bin and its half-maximum width.
/// Throws std::invalid_argument when the window holds fewer than 8 bins and
/// NumericalError when the iteration budget runs out.
LorentzianFit lorentzian_fit(const Spectrum& s,
                             const std::optional<FrequencyWindow>& window = std::nullopt);

/// 2I[-3 + I(1 + 4I(I+2))] / (3[3 + 4I(I+1)]).
double se_linewidth_coefficient(double nuclear_spin);

/// SERF spin-exchange linewidth (FWHM, Hz): omega_l^2 * coefficient / (pi * r_se).
double se_linewidth(double omega_l, double r_se, double nuclear_spin);

struct CalibrationPoint {
  double omega_l = 0.0;   // rad/s
  double delta_nu = 0.0;  // Hz, FWHM
};

struct CalibrationResult {
  double n_rb = 0.0;        // atoms/cm^3
  double delta_nu_0 = 0.0;  // Hz
  /// Parameter covariance, ordered (n_rb, delta_nu_0).
  Eigen::Matrix2d fit_covariance = Eigen::Matrix2d::Zero();
};

/// Least-squares fit of delta_nu = delta_nu_0 + se_linewidth(omega_l, R_SE(n))
/// over (n_rb, delta_nu_0), using sigma_se, v_bar and the nuclear spin of p.
CalibrationResult density_calibration(std::span<const CalibrationPoint> points,
                                      const PhysicalParams& p);

/// One simulated spin-noise measurement and its Lorentz fit.
struct LinewidthMeasurement {
  double omega_l = 0.0;
  double t2_inv = 0.0;
  Spectrum spectrum;
  LorentzianFit fit;
};

/// Simulates `n_samples` of photocurrent for `model` (spin stream
/// derive_seed(seed, 0), shot noise derive_seed(seed, 1)), estimates the PSD
/// and fits the Larmor line within +-`half_widths` expected FWHM of the
/// expected center.
LinewidthMeasurement measure_linewidth(const SystemModel& model, std::size_t n_samples,
                                       std::size_t segment_length, std::uint64_t seed,
                                       double overlap_fraction = 0.5, double half_widths = 5.0);

}  // namespace spinqnd
