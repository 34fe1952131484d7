#include "spinqnd/physmodel.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "spinqnd/linalg.hpp"

namespace spinqnd {
namespace {

void require_positive(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw std::invalid_argument(std::string(name) + " must be finite and > 0");
  }
}

}  // namespace

void PhysicalParams::validate() const {
  require_positive(n_rb, "n_rb");
  require_positive(sigma_se, "sigma_se");
  require_positive(v_bar, "v_bar");
  require_positive(gamma_e, "gamma_e");
  require_positive(q_slow, "q_slow");
  require_positive(nuclear_spin, "nuclear_spin");
  require_positive(cell_length, "cell_length");
  require_positive(beam_area, "beam_area");
  const double twice = 2.0 * nuclear_spin;
  if (std::abs(twice - std::round(twice)) > 1e-12) {
    throw std::invalid_argument("nuclear_spin must be a multiple of 1/2");
  }
}

void RelaxationRates::validate() const {
  if (!std::isfinite(t1_inv) || !std::isfinite(t2_inv) || t1_inv < 0.0) {
    throw std::invalid_argument("t1_inv and t2_inv must be finite with t1_inv >= 0");
  }
  if (t2_inv < t1_inv) {
    throw std::invalid_argument("t2_inv must be >= t1_inv");
  }
}

void MeasurementModel::validate() const {
  if (!(eta > 0.0 && eta <= 1.0)) {
    throw std::invalid_argument("eta must lie in (0, 1]");
  }
  if (!(delta > 0.0) || !std::isfinite(delta)) {
    throw std::invalid_argument("delta must be finite and > 0");
  }
  if (!(photon_flux >= 0.0) || !std::isfinite(photon_flux)) {
    throw std::invalid_argument("photon_flux must be finite and >= 0");
  }
  if (!std::isfinite(g_coupling)) {
    throw std::invalid_argument("g_coupling must be finite");
  }
}

double atom_number(const PhysicalParams& p) {
  return p.n_rb * p.cell_length * p.beam_area;
}

double se_rate(const PhysicalParams& p) { return p.sigma_se * p.n_rb * p.v_bar; }

Mat3 fdt_noise(const Mat3& f, const Mat3& q) { return f * q + q * f.transpose(); }

DynamicsModel build_dynamics(const PhysicalParams& p, const Vec3& b_field,
                             const RelaxationRates& rates, double n_atoms) {
  rates.validate();
  if (!b_field.allFinite()) {
    throw std::invalid_argument("b_field must be finite");
  }
  if (n_atoms < 0.0) {
    throw std::invalid_argument("n_atoms must be >= 0");
  }
  const double gamma = p.gyromagnetic_ratio();
  const double b = b_field.norm();

  Mat3 relax = rates.t1_inv * Mat3::Identity();
  if (b > 0.0) {
    const Vec3 bhat = b_field / b;
    relax = rates.t2_inv * Mat3::Identity() +
            (rates.t1_inv - rates.t2_inv) * (bhat * bhat.transpose());
  }

  DynamicsModel dyn;
  dyn.b_field = b_field;
  dyn.omega_l = gamma * b;
  dyn.f_matrix = -gamma * linalg::cross_matrix(b_field) + relax;
  dyn.q_eq = (n_atoms / 4.0) * Mat3::Identity();
  dyn.sigma_noise = fdt_noise(dyn.f_matrix, dyn.q_eq);
  return dyn;
}

EquilibriumVariation equilibrium_variation(double n_atoms) {
  return {0.75 * n_atoms, 0.5 * n_atoms};
}

double field_for_larmor(const PhysicalParams& p, double larmor_hz) {
  return 2.0 * std::numbers::pi * larmor_hz / p.gyromagnetic_ratio();
}

}  // namespace spinqnd
