#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "spinqnd/linalg.hpp"
#include "spinqnd/simulator.hpp"
#include "spinqnd/spectra.hpp"
#include "test_support.hpp"

namespace spinqnd {
namespace {

using testing::covariance_se;
using testing::diag111;

DynamicsModel field_dynamics(double larmor_hz, RelaxationRates rates, double n_atoms = 4e4) {
  PhysicalParams p;
  return build_dynamics(p, field_for_larmor(p, larmor_hz) * diag111(), rates, n_atoms);
}

TEST(Discretize, ZeroStepIsIdentity) {
  const auto dyn = field_dynamics(1e3, {200.0, 900.0});
  const auto dm = discretize(dyn, 1e-15);
  EXPECT_TRUE(dm.phi.isApprox(Mat3::Identity(), 1e-10));
  EXPECT_LT(dm.q_delta.norm(), 1e-9 * dyn.q_eq.norm());
}

TEST(Discretize, LongStepThermalizes) {
  const auto dyn = field_dynamics(1e3, {200.0, 900.0});
  const auto dm = discretize(dyn, 1.0);
  EXPECT_LT(dm.phi.norm(), 1e-80);
  EXPECT_TRUE(dm.q_delta.isApprox(dyn.q_eq, 1e-12));
}

TEST(Discretize, RejectsBadStep) {
  const auto dyn = field_dynamics(1e3, {200.0, 900.0});
  EXPECT_THROW(discretize(dyn, 0.0), std::invalid_argument);
  EXPECT_THROW(discretize(dyn, std::nan("")), std::invalid_argument);
  EXPECT_THROW(discretize(dyn, INFINITY), std::invalid_argument);
}

TEST(Discretize, ScalarAnalogue) {
  const double gamma = 750.0;
  const double q = 10.0;
  const double delta = 3e-4;
  const auto dyn = build_dynamics({}, Vec3::Zero(), {gamma, gamma}, 4.0 * q);
  const auto dm = discretize(dyn, delta);
  EXPECT_TRUE(dm.phi.isApprox(std::exp(-gamma * delta) * Mat3::Identity(), 1e-14));
  EXPECT_TRUE(dm.q_delta.isApprox(q * (1.0 - std::exp(-2.0 * gamma * delta)) * Mat3::Identity(),
                                  1e-12));
  const Mat3 integral = testing::lyapunov_integral(dyn.f_matrix, dyn.sigma_noise, delta);
  EXPECT_TRUE(dm.q_delta.isApprox(integral, 1e-8));
}

TEST(Discretize, MatchesLyapunovIntegralWithPrecession) {
  const auto dyn = field_dynamics(2e3, {300.0, 1800.0}, 400.0);
  const double delta = 2e-4;
  const auto dm = discretize(dyn, delta);
  EXPECT_TRUE(dm.phi.isApprox(testing::propagate_rk4(dyn.f_matrix, delta), 1e-10));
  const Mat3 integral = testing::lyapunov_integral(dyn.f_matrix, dyn.sigma_noise, delta);
  EXPECT_TRUE(dm.q_delta.isApprox(integral, 1e-7));
}

TEST(Discretize, EulerMaruyamaCovarianceConverges) {
  // Moment recursion of Euler-Maruyama over delta with m substeps:
  // P <- (I - F h) P (I - F h)^T + sigma h. Its bias is O(h).
  const auto dyn = field_dynamics(1e3, {200.0, 1200.0}, 400.0);
  const double delta = 1e-4;
  const auto dm = discretize(dyn, delta);
  double prev_err = INFINITY;
  for (int m : {16, 64, 256, 1024}) {
    const double h = delta / m;
    const Mat3 a = Mat3::Identity() - dyn.f_matrix * h;
    Mat3 p = Mat3::Zero();
    Mat3 phi = Mat3::Identity();
    for (int i = 0; i < m; ++i) {
      p = a * p * a.transpose() + dyn.sigma_noise * h;
      phi = a * phi;
    }
    const double err = (p - dm.q_delta).norm() / dm.q_delta.norm();
    EXPECT_LT(err, prev_err);
    prev_err = err;
    EXPECT_LT((phi - dm.phi).norm(), 5.0 * delta * dyn.f_matrix.norm() * dyn.f_matrix.norm() * h);
  }
  EXPECT_LT(prev_err, 1e-3);
}

TEST(SimulateSpin, NoiselessDecay) {
  const double gamma = 400.0;
  const double delta = 1e-4;
  DiscreteModel dm;
  dm.delta = delta;
  dm.phi = std::exp(-gamma * delta) * Mat3::Identity();
  dm.q_delta = Mat3::Zero();
  const auto traj = simulate_spin(dm, Mat3::Identity(), 50, 1, Vec3::UnitZ());
  ASSERT_EQ(traj.size(), 50u);
  for (std::size_t k = 0; k < traj.size(); ++k) {
    EXPECT_NEAR(traj.times[k], k * delta, 1e-18);
    EXPECT_TRUE(traj.spins[k].isApprox(std::exp(-gamma * k * delta) * Vec3::UnitZ(), 1e-12));
  }
}

TEST(SimulateSpin, SeedDeterminism) {
  const auto dyn = field_dynamics(1e3, {200.0, 900.0});
  const auto dm = discretize(dyn, 5e-6);
  const auto a = simulate_spin(dm, dyn.q_eq, 500, 99);
  const auto b = simulate_spin(dm, dyn.q_eq, 500, 99);
  const auto c = simulate_spin(dm, dyn.q_eq, 500, 100);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_EQ(a.spins[k], b.spins[k]);
  }
  EXPECT_NE(a.spins.back(), c.spins.back());
}

TEST(SimulateSpin, RejectsZeroSteps) {
  const auto dyn = field_dynamics(1e3, {200.0, 900.0});
  EXPECT_THROW(simulate_spin(discretize(dyn, 1e-5), dyn.q_eq, 0, 1), std::invalid_argument);
}

TEST(SimulateSpin, IndefiniteNoiseFails) {
  DiscreteModel dm;
  dm.delta = 1e-5;
  dm.q_delta = Mat3::Identity();
  dm.q_delta(2, 2) = -1.0;
  EXPECT_THROW(simulate_spin(dm, Mat3::Identity(), 10, 1), NumericalError);
}

// Ensemble statistics: stationarity from a thermal start and the analytic
// autocovariance E[J(t+tau) J(t)^T] = exp(-F tau) Q.
class Ensemble : public ::testing::Test {
 protected:
  static constexpr int kPaths = 2000;
  static constexpr std::size_t kSteps = 60;
  static constexpr double kDelta = 5e-5;

  void SetUp() override {
    dyn = field_dynamics(1e3, {300.0, 1500.0}, 4e4);
    dm = discretize(dyn, kDelta);
    for (int i = 0; i < kPaths; ++i) {
      paths.push_back(simulate_spin(dm, dyn.q_eq, kSteps, derive_seed(7, i)));
    }
  }

  DynamicsModel dyn;
  DiscreteModel dm;
  std::vector<SpinTrajectory> paths;
};

TEST_F(Ensemble, SingleTimeCovarianceIsStationary) {
  for (std::size_t k : {std::size_t{0}, std::size_t{20}, kSteps - 1}) {
    std::vector<Vec3> xs;
    for (const auto& p : paths) xs.push_back(p.spins[k]);
    const Mat3 c = testing::zero_mean_covariance(xs);
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        EXPECT_LT(std::abs(c(i, j) - dyn.q_eq(i, j)), 5.0 * covariance_se(dyn.q_eq, i, j, kPaths))
            << "k=" << k << " (" << i << "," << j << ")";
      }
    }
  }
}

TEST_F(Ensemble, AutocovarianceMatchesOrnsteinUhlenbeck) {
  const std::size_t t0 = 5;
  for (std::size_t lag : {1u, 4u, 10u, 25u}) {
    const Mat3 expect = testing::propagate_rk4(dyn.f_matrix, lag * kDelta) * dyn.q_eq;
    Mat3 acc = Mat3::Zero();
    for (const auto& p : paths) acc += p.spins[t0 + lag] * p.spins[t0].transpose();
    acc /= kPaths;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        const double se = std::sqrt(dyn.q_eq(i, i) * dyn.q_eq(j, j) / kPaths);
        EXPECT_LT(std::abs(acc(i, j) - expect(i, j)), 5.0 * se) << "lag=" << lag;
      }
    }
    // z sees 1/3 longitudinal decay plus 2/3 transverse decay modulated at omega_L
    const double tau = lag * kDelta;
    const double closed = dyn.q_eq(2, 2) * (std::exp(-300.0 * tau) / 3.0 +
                                            2.0 / 3.0 * std::exp(-1500.0 * tau) *
                                                std::cos(dyn.omega_l * tau));
    EXPECT_NEAR(expect(2, 2), closed, 1e-9 * dyn.q_eq(2, 2));
  }
}

TEST(SimulateSpin, StepSizeConsistency) {
  const auto dyn = field_dynamics(1e3, {300.0, 1500.0}, 4e4);
  const double delta = 5e-5;
  const auto fine = discretize(dyn, delta);
  const auto coarse = discretize(dyn, 2 * delta);
  EXPECT_TRUE((fine.phi * fine.phi).isApprox(coarse.phi, 1e-12));
  EXPECT_TRUE((fine.phi * fine.q_delta * fine.phi.transpose() + fine.q_delta)
                  .isApprox(coarse.q_delta, 1e-10));

  // Distributional check: lag-2 statistics of the fine run match lag-1 of the coarse run.
  const int paths = 3000;
  Mat3 fine_acc = Mat3::Zero();
  Mat3 coarse_acc = Mat3::Zero();
  std::vector<Vec3> fine_end, coarse_end;
  for (int i = 0; i < paths; ++i) {
    const auto f = simulate_spin(fine, dyn.q_eq, 41, derive_seed(11, i));
    const auto c = simulate_spin(coarse, dyn.q_eq, 21, derive_seed(12, i));
    fine_acc += f.spins[40] * f.spins[38].transpose();
    coarse_acc += c.spins[20] * c.spins[19].transpose();
    fine_end.push_back(f.spins[40]);
    coarse_end.push_back(c.spins[20]);
  }
  const double se = dyn.q_eq(0, 0) / std::sqrt(paths);
  EXPECT_LT(((fine_acc - coarse_acc) / paths).cwiseAbs().maxCoeff(), 5.0 * std::sqrt(2.0) * se);
  const Mat3 cf = testing::zero_mean_covariance(fine_end);
  const Mat3 cc = testing::zero_mean_covariance(coarse_end);
  EXPECT_LT((cf - cc).diagonal().cwiseAbs().maxCoeff(), 5.0 * std::sqrt(2.0) * std::sqrt(2.0) * se);
}

TEST(MeasurePhotocurrent, ShotNoiseOnly) {
  const auto dyn = field_dynamics(1e3, {300.0, 1500.0}, 4e12);
  const MeasurementModel m{0.0, 0.7, 2e15, 5e-6};
  const auto traj = simulate_spin(discretize(dyn, m.delta), dyn.q_eq, 20000, 3);
  const auto rec = measure_photocurrent(traj, m, 4);
  ASSERT_EQ(rec.size(), traj.size());
  double ss = 0.0;
  for (double v : rec.samples) ss += v * v;
  const double var = ss / rec.size();
  const double expect = m.noise_power();
  EXPECT_LT(std::abs(var - expect), 3.0 * expect * std::sqrt(2.0 / rec.size()));
}

TEST(MeasurePhotocurrent, NoPhotonsNoSignal) {
  const auto dyn = field_dynamics(1e3, {300.0, 1500.0}, 4e12);
  const MeasurementModel m{1e-12, 0.7, 0.0, 5e-6};
  const auto traj = simulate_spin(discretize(dyn, m.delta), dyn.q_eq, 100, 3);
  const auto rec = measure_photocurrent(traj, m, 4);
  for (double v : rec.samples) EXPECT_EQ(v, 0.0);
}

TEST(MeasurePhotocurrent, RegressionRecoversGain) {
  const auto dyn = field_dynamics(1e3, {300.0, 1500.0}, 4e12);
  const MeasurementModel m{1e-9, 0.9, 4e15, 5e-6};
  const auto traj = simulate_spin(discretize(dyn, m.delta), dyn.q_eq, 5000, 5);
  const auto rec = measure_photocurrent(traj, m, 6);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t k = 0; k < rec.size(); ++k) {
    sxy += traj.spins[k].z() * rec.samples[k];
    sxx += traj.spins[k].z() * traj.spins[k].z();
  }
  const double slope = sxy / sxx;
  const double gain = m.eta * m.g_coupling * m.photon_flux;
  const double slope_se = std::sqrt(m.noise_power() / sxx);
  EXPECT_LT(std::abs(slope - gain), 5.0 * slope_se);
  EXPECT_LT(slope_se, 1e-3 * gain);
}

TEST(MeasurePhotocurrent, IndependentStreams) {
  const auto dyn = field_dynamics(1e3, {300.0, 1500.0}, 4e12);
  const MeasurementModel m{1e-12, 0.8, 4e15, 5e-6};
  const auto traj = simulate_spin(discretize(dyn, m.delta), dyn.q_eq, 100, 3);
  const auto a = measure_photocurrent(traj, m, 10);
  const auto b = measure_photocurrent(traj, m, 10);
  const auto c = measure_photocurrent(traj, m, 11);
  EXPECT_EQ(a.samples, b.samples);
  EXPECT_NE(a.samples, c.samples);
}

TEST(MeasurePhotocurrent, RejectsMismatchedDelta) {
  const auto dyn = field_dynamics(1e3, {300.0, 1500.0}, 4e12);
  const auto traj = simulate_spin(discretize(dyn, 1e-5), dyn.q_eq, 10, 3);
  EXPECT_THROW(measure_photocurrent(traj, {1e-12, 0.8, 4e15, 5e-6}, 1), std::invalid_argument);
}

TEST(MeasurePhotocurrent, PsdBaselineIsShotNoiseLevel) {
  const auto dyn = field_dynamics(5e3, {300.0, 800.0}, 4e12);
  const MeasurementModel m{3e-13, 0.8, 4e15, 5e-6};
  const auto traj = simulate_spin(discretize(dyn, m.delta), dyn.q_eq, 1 << 18, 21);
  const auto rec = measure_photocurrent(traj, m, 22);
  const auto s = psd_welch(rec, 4096);
  // white shot-noise floor 2 (eta Ndot / delta) delta, read well above the Larmor peak
  double acc = 0.0;
  int n = 0;
  for (std::size_t k = 0; k < s.psd.size(); ++k) {
    if (s.frequencies[k] > 40e3 && s.frequencies[k] < 90e3) {
      acc += s.psd[k];
      ++n;
    }
  }
  const double floor = 2.0 * m.noise_power() * m.delta;
  EXPECT_NEAR(acc / n / floor, 1.0, 0.02);

  double mean = std::accumulate(rec.samples.begin(), rec.samples.end(), 0.0) / rec.size();
  double var = 0.0;
  for (double v : rec.samples) var += (v - mean) * (v - mean);
  var /= rec.size();
  EXPECT_NEAR(s.integrated_power() / var, 1.0, 0.01);
}

TEST(DeriveSeed, DistinctStreams) {
  EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
  EXPECT_NE(derive_seed(1, 0), derive_seed(2, 0));
  EXPECT_EQ(derive_seed(5, 3), derive_seed(5, 3));
}

}  // namespace
}  // namespace spinqnd
