#pragma once

#include <numbers>

#include "spinqnd/types.hpp"

namespace spinqnd {

/// Vapor and beam constants. Densities in atoms/cm^3, lengths in cm, the
/// gyromagnetic ratio in rad/s/T.
struct PhysicalParams {
  double n_rb = 3.6e14;
  double sigma_se = 1.9e-14;
  double v_bar = 4.75e4;
  double gamma_e = 2.0 * std::numbers::pi * 28e9;
  double q_slow = 6.0;
  double nuclear_spin = 1.5;
  double cell_length = 3.0;
  double beam_area = 0.049;

  /// Throws std::invalid_argument naming the first offending field.
  void validate() const;

  /// Slowed-down gyromagnetic ratio gamma_e / q.
  [[nodiscard]] double gyromagnetic_ratio() const { return gamma_e / q_slow; }
  [[nodiscard]] double effective_volume() const { return cell_length * beam_area; }
};

/// Longitudinal (along B) and transverse relaxation rates in 1/s.
struct RelaxationRates {
  double t1_inv = 0.0;
  double t2_inv = 0.0;

  void validate() const;
};

/// Continuous-time linear model dJ = -F J dt + sqrt(sigma) dW.
struct DynamicsModel {
  Mat3 f_matrix = Mat3::Zero();
  Mat3 q_eq = Mat3::Zero();
  Mat3 sigma_noise = Mat3::Zero();
  Vec3 b_field = Vec3::Zero();
  double omega_l = 0.0;
};

/// Polarimeter readout of J_z, sampled every `delta` seconds.
struct MeasurementModel {
  double g_coupling = 0.0;
  double eta = 1.0;
  double photon_flux = 0.0;
  double delta = 5e-6;

  void validate() const;

  /// H = [0, 0, eta g Ndot].
  [[nodiscard]] Row3 observation_row() const {
    return Row3(0.0, 0.0, eta * g_coupling * photon_flux);
  }
  /// Per-sample shot-noise variance eta Ndot / delta.
  [[nodiscard]] double noise_power() const { return eta * photon_flux / delta; }
};

struct EquilibriumVariation {
  double tss = 0.0;
  double sql = 0.0;
};

double atom_number(const PhysicalParams& p);

/// R_SE = sigma_se n_rb v_bar.
double se_rate(const PhysicalParams& p);

/// F = -gamma [B]x + R with R = t2 I + (t1 - t2) b b^T, and Q = (N/4) I.
/// Throws std::invalid_argument when t2_inv < t1_inv.
DynamicsModel build_dynamics(const PhysicalParams& p, const Vec3& b_field,
                             const RelaxationRates& rates, double n_atoms);

/// F Q + Q F^T.
Mat3 fdt_noise(const Mat3& f, const Mat3& q);

EquilibriumVariation equilibrium_variation(double n_atoms);

/// Field magnitude (T) giving Larmor frequency `larmor_hz` for the slowed
/// gyromagnetic ratio of p.
double field_for_larmor(const PhysicalParams& p, double larmor_hz);

/// Everything needed to run the estimator on a configured experiment.
struct SystemModel {
  PhysicalParams physical;
  Vec3 b_field = Vec3::Zero();
  RelaxationRates rates;
  MeasurementModel measurement;

  [[nodiscard]] double n_atoms() const { return atom_number(physical); }
  [[nodiscard]] DynamicsModel dynamics() const {
    return build_dynamics(physical, b_field, rates, n_atoms());
  }
};

}  // namespace spinqnd
