#include "spinqnd/simulator.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "spinqnd/linalg.hpp"

namespace spinqnd {
namespace {

Vec3 standard_normal3(std::mt19937_64& rng, std::normal_distribution<double>& normal) {
  Vec3 z;
  z.x() = normal(rng);
  z.y() = normal(rng);
  z.z() = normal(rng);
  return z;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over (seed, stream)
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

DiscreteModel discretize(const DynamicsModel& dyn, double delta) {
  if (!std::isfinite(delta) || delta <= 0.0) {
    throw std::invalid_argument("discretize: delta must be finite and > 0");
  }
  DiscreteModel dm;
  dm.delta = delta;
  dm.phi = linalg::expm(-dyn.f_matrix * delta);
  dm.q_delta = linalg::symmetrized(dyn.q_eq - dm.phi * dyn.q_eq * dm.phi.transpose());
  return dm;
}

SpinTrajectory simulate_spin(const DiscreteModel& dm, const Mat3& q_eq, std::size_t n_steps,
                             std::uint64_t seed, const std::optional<Vec3>& j0) {
  if (n_steps < 1) {
    throw std::invalid_argument("simulate_spin: n_steps must be >= 1");
  }
  const Mat3 step_sqrt = linalg::psd_sqrt(dm.q_delta);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  SpinTrajectory traj;
  traj.seed = seed;
  traj.times.resize(n_steps);
  traj.spins.resize(n_steps);

  Vec3 j = j0 ? *j0 : Vec3(linalg::psd_sqrt(q_eq) * standard_normal3(rng, normal));
  traj.times[0] = 0.0;
  traj.spins[0] = j;
  for (std::size_t k = 1; k < n_steps; ++k) {
    j = dm.phi * j + step_sqrt * standard_normal3(rng, normal);
    traj.times[k] = static_cast<double>(k) * dm.delta;
    traj.spins[k] = j;
  }
  return traj;
}

PhotocurrentRecord measure_photocurrent(const SpinTrajectory& traj, const MeasurementModel& m,
                                        std::uint64_t seed) {
  m.validate();
  if (traj.size() > 1 && std::abs(traj.delta() - m.delta) > 1e-9 * m.delta) {
    throw std::invalid_argument("measure_photocurrent: trajectory and measurement delta differ");
  }
  const double gain = m.eta * m.g_coupling * m.photon_flux;
  const double noise_sd = std::sqrt(m.noise_power());

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  PhotocurrentRecord rec;
  rec.seed = seed;
  rec.times = traj.times;
  rec.samples.resize(traj.size());
  for (std::size_t k = 0; k < traj.size(); ++k) {
    rec.samples[k] = gain * traj.spins[k].z() + noise_sd * normal(rng);
  }
  return rec;
}

}  // namespace spinqnd
