#include "spinqnd/witness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <stdexcept>
#include <thread>

#include "spinqnd/detail/least_squares.hpp"

namespace spinqnd {

double squeezing_parameter(double total_variation, double n_atoms) {
  if (!(n_atoms > 0.0)) {
    throw std::invalid_argument("squeezing_parameter: n_atoms must be > 0");
  }
  return total_variation / (0.5 * n_atoms);
}

double squeezing_db(double xi_squared) { return -10.0 * std::log10(xi_squared); }

double entangled_bound(double xi_squared, double n_atoms) {
  return std::max(0.0, (1.0 - xi_squared) * n_atoms);
}

WitnessReport witness_report(const Mat3& covariance, double n_atoms) {
  WitnessReport w;
  w.n_atoms = n_atoms;
  w.per_component_variance = covariance.diagonal();
  w.total_variation = total_variation(covariance);
  w.xi_squared = squeezing_parameter(w.total_variation, n_atoms);
  w.squeezing_db = squeezing_db(w.xi_squared);
  w.entangled_lower_bound = entangled_bound(w.xi_squared, n_atoms);
  return w;
}

double gradient_omega(double gamma, double b_prime, double delta_z) {
  return gamma * b_prime * delta_z;
}

double rms_pair_separation(double cell_length) { return cell_length / std::sqrt(24.0); }

double singlet_separation_estimate(double added_rate, double gamma, double b_prime) {
  if (!(b_prime > 0.0) || !(gamma > 0.0)) {
    throw std::invalid_argument("singlet_separation_estimate: gamma and b_prime must be > 0");
  }
  return added_rate / (gamma * b_prime);
}

DecayFit decay_fit(std::span<const double> times, std::span<const double> variances,
                   double asymptote) {
  if (times.size() != variances.size() || times.size() < 4) {
    throw std::invalid_argument("decay_fit: need at least 4 (time, variance) pairs");
  }
  if (!(asymptote > 0.0)) {
    throw std::invalid_argument("decay_fit: asymptote must be > 0");
  }
  if (!std::is_sorted(times.begin(), times.end())) {
    throw std::invalid_argument("decay_fit: times must be ascending");
  }

  const auto [vmin, vmax] = std::minmax_element(variances.begin(), variances.end());
  if (*vmax - *vmin <= 1e-12 * asymptote) {
    return {0.0, std::numeric_limits<double>::infinity(), variances.front(), true};
  }

  const double t0 = times.front();
  const double sign = (asymptote - variances.front()) >= 0.0 ? 1.0 : -1.0;
  // log-linear estimate of r from the points still clearly off the asymptote
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  int used = 0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double gap = sign * (asymptote - variances[i]);
    if (gap > 1e-9 * asymptote) {
      const double x = times[i] - t0;
      const double y = std::log(gap);
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
      ++used;
    }
  }
  const double span = times.back() - t0;
  double r0 = span > 0.0 ? 1.0 / span : 1.0;
  if (used >= 2) {
    const double denom = used * sxx - sx * sx;
    if (denom > 0.0) {
      const double slope = (used * sxy - sx * sy) / denom;
      if (slope < 0.0) {
        r0 = -slope;
      }
    }
  }

  using Vec2 = Eigen::Vector2d;
  auto eval = [&](const Vec2& p, Eigen::VectorXd& res, Eigen::Matrix<double, Eigen::Dynamic, 2>& jac) {
    const auto m = static_cast<Eigen::Index>(times.size());
    res.resize(m);
    jac.resize(m, 2);
    for (Eigen::Index i = 0; i < m; ++i) {
      const double tau = times[static_cast<std::size_t>(i)] - t0;
      const double e = std::exp(-p[1] * tau);
      res[i] = asymptote - (asymptote - p[0]) * e - variances[static_cast<std::size_t>(i)];
      jac(i, 0) = e;
      jac(i, 1) = (asymptote - p[0]) * tau * e;
    }
    return res.allFinite();
  };
  const auto fit = detail::levenberg_marquardt<2>(eval, Vec2(variances.front(), r0));
  if (!fit.converged) {
    throw NumericalError("decay_fit: no convergence within the iteration budget");
  }
  DecayFit out;
  out.initial_variance = fit.params[0];
  out.rate = fit.params[1];
  out.uncertainty = std::sqrt(std::max(fit.covariance(1, 1), 0.0));
  return out;
}

RelaxationRates gradient_rates(const RelaxationRates& base, double added_rate, GradientMode mode) {
  RelaxationRates r = base;
  const double amplitude_rate = 0.5 * added_rate;
  r.t2_inv += amplitude_rate;
  if (mode == GradientMode::isotropic) {
    r.t1_inv += amplitude_rate;
  }
  return r;
}

namespace {

GradientScanResult scan_point(const SystemModel& base, double gradient, double gamma, double dz,
                              const GradientScanConfig& cfg) {
  GradientScanResult res;
  res.gradient = gradient;
  res.added_rate = gradient_omega(gamma, gradient, dz);

  SystemModel model = base;
  model.rates = gradient_rates(base.rates, res.added_rate, cfg.mode);
  const DynamicsModel dyn = model.dynamics();
  const DiscreteModel probe = discretize(dyn, model.measurement.delta);
  const SteadyState ss = steady_state_covariance(probe, model.measurement, dyn.q_eq, cfg.kalman);
  res.per_component_variance = ss.covariance.diagonal();

  const double dt = cfg.duration / static_cast<double>(cfg.series_points);
  const DiscreteModel free = discretize(dyn, dt);
  FilterState state{Vec3::Zero(), ss.covariance, 0};
  std::vector<double> t;
  std::vector<double> v;
  t.reserve(cfg.series_points + 1);
  v.reserve(cfg.series_points + 1);
  for (std::size_t k = 0; k <= cfg.series_points; ++k) {
    if (k > 0) {
      state = kf_predict(state, free);
    }
    t.push_back(static_cast<double>(k) * dt);
    v.push_back(total_variation(state.covariance));
    res.variance_series.emplace_back(t.back(), v.back());
  }
  const DecayFit fit = decay_fit(t, v, dyn.q_eq.trace());
  res.decay_rate = fit.rate;
  res.rate_uncertainty = fit.uncertainty;
  return res;
}

}  // namespace

std::vector<GradientScanResult> gradient_scan(const SystemModel& base,
                                              std::span<const double> gradients,
                                              const GradientScanConfig& config) {
  for (double g : gradients) {
    if (!(g >= 0.0) || !std::isfinite(g)) {
      throw std::invalid_argument("gradient_scan: gradients must be finite and >= 0");
    }
  }
  if (config.series_points < 4 || !(config.duration > 0.0)) {
    throw std::invalid_argument("gradient_scan: need duration > 0 and >= 4 series points");
  }
  const double gamma = config.gamma.value_or(base.physical.gyromagnetic_ratio());
  const double dz =
      config.delta_z.value_or(rms_pair_separation(base.physical.cell_length * 1e-2));

  std::vector<GradientScanResult> out(gradients.size());
  std::vector<std::exception_ptr> errors(gradients.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < gradients.size(); i = next++) {
      try {
        out[i] = scan_point(base, gradients[i], gamma, dz, config);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned jobs = std::clamp<unsigned>(config.jobs, 1, static_cast<unsigned>(
                                                                 std::max<std::size_t>(gradients.size(), 1)));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned j = 0; j < jobs; ++j) {
      pool.emplace_back(worker);
    }
  }
  for (auto& e : errors) {
    if (e) {
      std::rethrow_exception(e);
    }
  }
  return out;
}

}  // namespace spinqnd
