#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "spinqnd/physmodel.hpp"

namespace spinqnd {

/// Exact one-step transition J_k ~ N(phi J_{k-1}, q_delta).
struct DiscreteModel {
  Mat3 phi = Mat3::Identity();
  Mat3 q_delta = Mat3::Zero();
  double delta = 0.0;
};

/// Samples J_k at t_k = k * delta, k = 0 .. n-1.
struct SpinTrajectory {
  std::vector<double> times;
  std::vector<Vec3> spins;
  std::uint64_t seed = 0;

  [[nodiscard]] std::size_t size() const { return spins.size(); }
  [[nodiscard]] double delta() const { return times.size() > 1 ? times[1] - times[0] : 0.0; }
};

/// Photocurrent I(t_k), one sample per trajectory sample.
struct PhotocurrentRecord {
  std::vector<double> times;
  std::vector<double> samples;
  std::uint64_t seed = 0;

  [[nodiscard]] std::size_t size() const { return samples.size(); }
  [[nodiscard]] double delta() const { return times.size() > 1 ? times[1] - times[0] : 0.0; }
};

/// phi = exp(-F delta), q_delta = Q - phi Q phi^T. Throws std::invalid_argument
/// for non-finite or non-positive delta.
DiscreteModel discretize(const DynamicsModel& dyn, double delta);

/// Exact-discretization sample path. When j0 is absent the initial state is
/// drawn from N(0, q_eq) using the same stream as the increments.
SpinTrajectory simulate_spin(const DiscreteModel& dm, const Mat3& q_eq, std::size_t n_steps,
                             std::uint64_t seed, const std::optional<Vec3>& j0 = std::nullopt);

/// I_k = eta g Ndot J_z,k + nu_k with nu_k ~ N(0, eta Ndot / delta). The shot
/// noise stream is seeded independently of the trajectory.
PhotocurrentRecord measure_photocurrent(const SpinTrajectory& traj, const MeasurementModel& m,
                                        std::uint64_t seed);

/// Derives a decorrelated child seed; used to fan a single user seed out into
/// the spin stream, the shot-noise stream and per-scan-point streams.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace spinqnd
