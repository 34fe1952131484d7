#include "spinqnd/spectra.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include <unsupported/Eigen/FFT>

#include "spinqnd/detail/least_squares.hpp"

namespace spinqnd {

double Spectrum::integrated_power() const {
  return std::accumulate(psd.begin(), psd.end(), 0.0) * resolution;
}

Spectrum psd_welch(std::span<const double> samples, double delta, std::size_t segment_length,
                   double overlap_fraction) {
  if (!(delta > 0.0)) {
    throw std::invalid_argument("psd_welch: delta must be > 0");
  }
  if (segment_length < 2 || segment_length > samples.size()) {
    throw std::invalid_argument("psd_welch: record too short for the segment length");
  }
  if (!(overlap_fraction >= 0.0 && overlap_fraction < 1.0)) {
    throw std::invalid_argument("psd_welch: overlap must lie in [0, 1)");
  }
  const std::size_t n = segment_length;
  const auto overlap = static_cast<std::size_t>(std::llround(overlap_fraction * static_cast<double>(n)));
  const std::size_t hop = std::max<std::size_t>(1, n - std::min(overlap, n - 1));
  const double fs = 1.0 / delta;

  std::vector<double> window(n);
  double w2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                     static_cast<double>(n));
    w2 += window[i] * window[i];
  }

  const std::size_t bins = n / 2 + 1;
  std::vector<double> acc(bins, 0.0);
  Eigen::FFT<double> fft;
  std::vector<double> seg(n);
  std::vector<std::complex<double>> spec;

  std::size_t count = 0;
  for (std::size_t start = 0; start + n <= samples.size(); start += hop) {
    const auto piece = samples.subspan(start, n);
    const double mean = std::accumulate(piece.begin(), piece.end(), 0.0) / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      seg[i] = (piece[i] - mean) * window[i];
    }
    fft.fwd(spec, seg);
    for (std::size_t k = 0; k < bins; ++k) {
      acc[k] += std::norm(spec[k]);
    }
    ++count;
  }

  Spectrum out;
  out.segments = count;
  out.resolution = fs / static_cast<double>(n);
  out.frequencies.resize(bins);
  out.psd.resize(bins);
  const double scale = 1.0 / (fs * w2 * static_cast<double>(count));
  for (std::size_t k = 0; k < bins; ++k) {
    const bool unpaired = (k == 0) || (n % 2 == 0 && k == n / 2);
    out.frequencies[k] = static_cast<double>(k) * out.resolution;
    out.psd[k] = acc[k] * scale * (unpaired ? 1.0 : 2.0);
  }
  return out;
}

Spectrum psd_welch(const PhotocurrentRecord& record, std::size_t segment_length,
                   double overlap_fraction) {
  if (record.size() < 2) {
    throw std::invalid_argument("psd_welch: record too short");
  }
  return psd_welch(record.samples, record.delta(), segment_length, overlap_fraction);
}

namespace {

struct PeakGuess {
  double center;
  double fwhm;
  double amplitude;
  double offset;
};

double lower_decile(std::vector<double> v) {
  const auto idx = v.size() / 10;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(idx), v.end());
  return v[idx];
}

/// Peak bin, spectral floor and interpolated half-maximum crossings over [lo, hi).
PeakGuess guess_peak(const Spectrum& s, std::size_t lo, std::size_t hi) {
  std::size_t peak = lo;
  for (std::size_t k = lo; k < hi; ++k) {
    if (s.psd[k] > s.psd[peak]) {
      peak = k;
    }
  }
  const double offset =
      lower_decile(std::vector<double>(s.psd.begin() + static_cast<std::ptrdiff_t>(lo),
                                       s.psd.begin() + static_cast<std::ptrdiff_t>(hi)));
  const double amplitude = s.psd[peak] - offset;
  const double half = offset + 0.5 * amplitude;

  auto crossing = [&](std::size_t from, int dir) {
    std::size_t k = from;
    while (true) {
      const std::size_t next = dir < 0 ? k - 1 : k + 1;
      if ((dir < 0 && k == lo) || (dir > 0 && next >= hi)) {
        return s.frequencies[k];
      }
      if (s.psd[next] < half) {
        const double t = (s.psd[k] - half) / (s.psd[k] - s.psd[next]);
        return s.frequencies[k] + t * (s.frequencies[next] - s.frequencies[k]);
      }
      k = next;
    }
  };
  const double fwhm =
      std::max(crossing(peak, +1) - crossing(peak, -1), s.resolution);
  return {s.frequencies[peak], fwhm, amplitude, offset};
}

std::size_t bin_at_or_above(const Spectrum& s, double f) {
  return static_cast<std::size_t>(
      std::lower_bound(s.frequencies.begin(), s.frequencies.end(), f) - s.frequencies.begin());
}

}  // namespace

LorentzianFit lorentzian_fit(const Spectrum& s, const std::optional<FrequencyWindow>& window) {
  if (s.psd.size() != s.frequencies.size() || s.psd.size() < 8) {
    throw std::invalid_argument("lorentzian_fit: spectrum has fewer than 8 bins");
  }
  std::size_t lo = 0;
  std::size_t hi = s.psd.size();
  PeakGuess guess{};
  if (window) {
    lo = bin_at_or_above(s, window->lo);
    hi = std::min(s.psd.size(), static_cast<std::size_t>(
                                    std::upper_bound(s.frequencies.begin(), s.frequencies.end(),
                                                     window->hi) -
                                    s.frequencies.begin()));
    if (hi <= lo || hi - lo < 8) {
      throw std::invalid_argument("lorentzian_fit: window contains fewer than 8 bins");
    }
    guess = guess_peak(s, lo, hi);
  } else {
    guess = guess_peak(s, 1, s.psd.size());
    if (guess.amplitude > 0.0) {
      lo = bin_at_or_above(s, guess.center - 5.0 * guess.fwhm);
      hi = std::min(s.psd.size(), bin_at_or_above(s, guess.center + 5.0 * guess.fwhm) + 1);
      if (hi - lo < 8) {
        const std::size_t mid = bin_at_or_above(s, guess.center);
        lo = mid >= 4 ? mid - 4 : 0;
        hi = std::min(s.psd.size(), lo + 8);
        lo = hi - 8;
      }
    }
  }

  LorentzianFit out;
  out.window = {s.frequencies[lo], s.frequencies[hi - 1]};
  const std::span<const double> f(s.frequencies.data() + lo, hi - lo);
  const std::span<const double> y(s.psd.data() + lo, hi - lo);

  if (!(guess.amplitude > 0.0)) {
    out.center = guess.center;
    out.offset = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
    double ss = 0.0;
    for (double v : y) {
      ss += (v - out.offset) * (v - out.offset);
    }
    out.residual_rms = std::sqrt(ss / static_cast<double>(y.size()));
    return out;
  }

  using Vec4 = Eigen::Matrix<double, 4, 1>;
  auto eval = [&](const Vec4& p, Eigen::VectorXd& r, Eigen::Matrix<double, Eigen::Dynamic, 4>& j) {
    const double c = p[0];
    const double hw = 0.5 * p[1];
    if (!(hw > 0.0)) {
      return false;
    }
    const auto m = static_cast<Eigen::Index>(f.size());
    r.resize(m);
    j.resize(m, 4);
    for (Eigen::Index i = 0; i < m; ++i) {
      const double d = f[static_cast<std::size_t>(i)] - c;
      const double den = d * d + hw * hw;
      const double shape = hw * hw / den;
      r[i] = p[3] + p[2] * shape - y[static_cast<std::size_t>(i)];
      j(i, 0) = p[2] * hw * hw * 2.0 * d / (den * den);
      j(i, 1) = p[2] * hw * d * d / (den * den);
      j(i, 2) = shape;
      j(i, 3) = 1.0;
    }
    return true;
  };

  const Vec4 start(guess.center, guess.fwhm, guess.amplitude, guess.offset);
  const auto fit = detail::levenberg_marquardt<4>(eval, start);
  if (!fit.converged) {
    throw NumericalError("lorentzian_fit: no convergence within the iteration budget");
  }
  out.center = fit.params[0];
  out.fwhm = std::abs(fit.params[1]);
  out.amplitude = fit.params[2];
  out.offset = fit.params[3];
  out.iterations = fit.iterations;
  out.residual_rms = std::sqrt(fit.rss / static_cast<double>(f.size()));

  const double amp_se = std::sqrt(std::max(fit.covariance(2, 2), 0.0));
  out.has_peak = out.amplitude > 0.0 && out.fwhm > 0.0 && out.amplitude > 3.0 * amp_se;
  if (!out.has_peak) {
    out.amplitude = std::max(out.amplitude, 0.0);
  }
  return out;
}

double se_linewidth_coefficient(double nuclear_spin) {
  const double i = nuclear_spin;
  return 2.0 * i * (-3.0 + i * (1.0 + 4.0 * i * (i + 2.0))) / (3.0 * (3.0 + 4.0 * i * (i + 1.0)));
}

double se_linewidth(double omega_l, double r_se, double nuclear_spin) {
  if (!(r_se > 0.0)) {
    throw std::invalid_argument("se_linewidth: r_se must be > 0");
  }
  return omega_l * omega_l * se_linewidth_coefficient(nuclear_spin) / (std::numbers::pi * r_se);
}

CalibrationResult density_calibration(std::span<const CalibrationPoint> points,
                                      const PhysicalParams& p) {
  if (points.size() < 3) {
    throw std::invalid_argument("density_calibration: need at least 3 points");
  }
  // delta_nu = delta_nu_0 + a * x with a = 1 / n_rb; the optimum over (n_rb,
  // delta_nu_0) is the same point as the linear optimum over (a, delta_nu_0).
  const double per_density = se_linewidth_coefficient(p.nuclear_spin) /
                             (std::numbers::pi * p.sigma_se * p.v_bar);
  const auto m = static_cast<Eigen::Index>(points.size());
  Eigen::MatrixX2d design(m, 2);
  Eigen::VectorXd y(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto& pt = points[static_cast<std::size_t>(i)];
    if (!std::isfinite(pt.omega_l) || !std::isfinite(pt.delta_nu)) {
      throw std::invalid_argument("density_calibration: non-finite point");
    }
    design(i, 0) = pt.omega_l * pt.omega_l * per_density;
    design(i, 1) = 1.0;
    y[i] = pt.delta_nu;
  }
  const double xmin = design.col(0).minCoeff();
  const double xmax = design.col(0).maxCoeff();
  if (!(xmax > xmin * (1.0 + 1e-12)) || xmax <= 0.0) {
    throw std::invalid_argument("density_calibration: rank-deficient design (omega_l values coincide)");
  }

  // x is ~1e18 for lab densities; solve in units of xmax
  Eigen::MatrixX2d scaled = design;
  scaled.col(0) /= xmax;
  Eigen::Vector2d beta = scaled.colPivHouseholderQr().solve(y);
  Eigen::Matrix2d cov_lin = Eigen::Matrix2d::Zero();
  const double dof = static_cast<double>(m - 2);
  if (beta[1] < 0.0) {
    // Boundary optimum of the constrained problem delta_nu_0 >= 0.
    const Eigen::VectorXd x = scaled.col(0);
    beta = Eigen::Vector2d(x.dot(y) / x.squaredNorm(), 0.0);
    const double s2 = (y - x * beta[0]).squaredNorm() / std::max(dof + 1.0, 1.0);
    cov_lin(0, 0) = s2 / x.squaredNorm();
  } else {
    const double s2 = dof > 0 ? (y - scaled * beta).squaredNorm() / dof : 0.0;
    cov_lin = s2 * (scaled.transpose() * scaled).inverse();
  }
  beta[0] /= xmax;
  cov_lin.row(0) /= xmax;
  cov_lin.col(0) /= xmax;
  if (!(beta[0] > 0.0)) {
    throw NumericalError("density_calibration: fitted linewidth does not grow with omega_l");
  }

  CalibrationResult out;
  out.n_rb = 1.0 / beta[0];
  out.delta_nu_0 = beta[1];
  Eigen::Matrix2d jac = Eigen::Matrix2d::Zero();
  jac(0, 0) = -1.0 / (beta[0] * beta[0]);
  jac(1, 1) = 1.0;
  out.fit_covariance = jac * cov_lin * jac.transpose();
  return out;
}

LinewidthMeasurement measure_linewidth(const SystemModel& model, std::size_t n_samples,
                                       std::size_t segment_length, std::uint64_t seed,
                                       double overlap_fraction, double half_widths) {
  const DynamicsModel dyn = model.dynamics();
  const DiscreteModel dm = discretize(dyn, model.measurement.delta);
  const auto traj = simulate_spin(dm, dyn.q_eq, n_samples, derive_seed(seed, 0));
  const auto rec = measure_photocurrent(traj, model.measurement, derive_seed(seed, 1));

  LinewidthMeasurement out;
  out.omega_l = dyn.omega_l;
  out.t2_inv = model.rates.t2_inv;
  out.spectrum = psd_welch(rec, segment_length, overlap_fraction);
  const double center = dyn.omega_l / (2.0 * std::numbers::pi);
  const double fwhm = model.rates.t2_inv / std::numbers::pi;
  const FrequencyWindow window{std::max(center - half_widths * fwhm, out.spectrum.resolution),
                               center + half_widths * fwhm};
  out.fit = lorentzian_fit(out.spectrum, window);
  return out;
}

}  // namespace spinqnd
