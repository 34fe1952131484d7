#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "spinqnd/linalg.hpp"
#include "spinqnd/physmodel.hpp"
#include "test_support.hpp"

namespace spinqnd {
namespace {

using testing::diag111;
using testing::propagate_rk4;

TEST(AtomNumber, MainTextConditions) {
  PhysicalParams p;  // 3.6e14 /cm^3 in 3 cm x 0.049 cm^2
  EXPECT_NEAR(atom_number(p), 5.292e13, 1e-3 * 5.292e13);
  EXPECT_NEAR(atom_number(p) / 5.3e13, 1.0, 0.01);
}

TEST(AtomNumber, ScalesWithDensity) {
  PhysicalParams p;
  p.n_rb = 1.0e14;
  EXPECT_DOUBLE_EQ(atom_number(p), 1.0e14 * 3.0 * 0.049);
  EXPECT_NEAR(atom_number(p), 1.47e13, 1e-9 * 1.47e13);
  p.n_rb = 0.0;
  EXPECT_EQ(atom_number(p), 0.0);
}

TEST(SeRate, DirectProduct) {
  PhysicalParams p;
  p.n_rb = 3.6e13;
  EXPECT_NEAR(se_rate(p), 32490.0, 1e-9 * 32490.0);
  const double base = se_rate(p);
  p.n_rb *= 2.0;
  EXPECT_DOUBLE_EQ(se_rate(p), 2.0 * base);
  p.n_rb = 0.0;
  EXPECT_EQ(se_rate(p), 0.0);
}

TEST(PhysicalParams, Validation) {
  PhysicalParams p;
  EXPECT_NO_THROW(p.validate());
  p.nuclear_spin = 1.3;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p = {};
  p.beam_area = 0.0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  EXPECT_DOUBLE_EQ(PhysicalParams{}.gyromagnetic_ratio(), 2.0 * std::numbers::pi * 28e9 / 6.0);
}

TEST(BuildDynamics, ZeroFieldIsIsotropicRelaxation) {
  const auto dyn = build_dynamics({}, Vec3::Zero(), {250.0, 250.0}, 4.0);
  EXPECT_TRUE(dyn.f_matrix.isApprox(250.0 * Mat3::Identity()));
  EXPECT_TRUE(dyn.q_eq.isApprox(Mat3::Identity()));
  EXPECT_EQ(dyn.omega_l, 0.0);
}

TEST(BuildDynamics, RejectsT2BelowT1) {
  EXPECT_THROW(build_dynamics({}, Vec3::UnitZ() * 1e-9, {200.0, 100.0}, 1.0),
               std::invalid_argument);
}

TEST(BuildDynamics, DiagonalFieldCyclesZToXToY) {
  PhysicalParams p;
  const double larmor = 1e3;
  const Vec3 b = field_for_larmor(p, larmor) * diag111();
  const auto dyn = build_dynamics(p, b, {0.0, 0.0}, 1.0);
  EXPECT_NEAR(dyn.omega_l, 2.0 * std::numbers::pi * larmor, 1e-6);

  const Mat3 third = propagate_rk4(dyn.f_matrix, 1.0 / (3.0 * larmor));
  EXPECT_TRUE((third * Vec3::UnitZ()).isApprox(Vec3::UnitX(), 1e-8));
  EXPECT_TRUE((third * Vec3::UnitX()).isApprox(Vec3::UnitY(), 1e-8));
  EXPECT_TRUE((third * Vec3::UnitY()).isApprox(Vec3::UnitZ(), 1e-8));
}

TEST(BuildDynamics, RelaxationEnvelopeOnPermutation) {
  PhysicalParams p;
  const double larmor = 1e3;
  const Vec3 b = field_for_larmor(p, larmor) * diag111();
  const RelaxationRates rates{300.0, 300.0};
  const auto dyn = build_dynamics(p, b, rates, 1.0);
  const double t = 1.0 / (3.0 * larmor);
  const Mat3 third = propagate_rk4(dyn.f_matrix, t);
  EXPECT_TRUE((third * Vec3::UnitZ()).isApprox(std::exp(-300.0 * t) * Vec3::UnitX(), 1e-8));
}

TEST(BuildDynamics, EigenvalueRealPartsAreRelaxationRates) {
  PhysicalParams p;
  const Vec3 b = Vec3(0.3, -1.2, 0.7).normalized() * field_for_larmor(p, 2.5e3);
  const auto dyn = build_dynamics(p, b, {120.0, 900.0}, 1.0);
  Eigen::EigenSolver<Mat3> es(dyn.f_matrix);
  std::vector<double> re;
  for (int i = 0; i < 3; ++i) re.push_back(es.eigenvalues()[i].real());
  std::sort(re.begin(), re.end());
  EXPECT_NEAR(re[0], 120.0, 1e-6);
  EXPECT_NEAR(re[1], 900.0, 1e-6);
  EXPECT_NEAR(re[2], 900.0, 1e-6);
}

TEST(FdtNoise, ScalarCase) {
  EXPECT_TRUE(fdt_noise(7.0 * Mat3::Identity(), 3.0 * Mat3::Identity())
                  .isApprox(42.0 * Mat3::Identity()));
}

TEST(FdtNoise, PrecessionInjectsNoNoiseIntoIsotropicState) {
  const Mat3 f = linalg::cross_matrix(Vec3(1.0, -2.0, 0.5));
  EXPECT_TRUE(fdt_noise(f, 5.0 * Mat3::Identity()).isZero(1e-12));
}

TEST(FdtNoise, GenericElementwise) {
  Mat3 f;
  f << 1.0, 2.0, -0.5, 0.3, 4.0, 1.1, -2.0, 0.7, 3.0;
  Mat3 q;
  q << 2.0, 0.1, 0.3, 0.1, 1.5, -0.2, 0.3, -0.2, 1.0;
  const Mat3 s = fdt_noise(f, q);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double expect = 0.0;
      for (int k = 0; k < 3; ++k) expect += f(i, k) * q(k, j) + q(i, k) * f(j, k);
      EXPECT_NEAR(s(i, j), expect, 1e-12);
    }
  }
  EXPECT_TRUE(s.isApprox(s.transpose()));
}

TEST(EquilibriumVariation, Values) {
  const auto reference = equilibrium_variation(5.3e13);
  EXPECT_DOUBLE_EQ(reference.tss, 3.975e13);
  EXPECT_DOUBLE_EQ(reference.sql, 2.65e13);
  const auto zero = equilibrium_variation(0.0);
  EXPECT_EQ(zero.tss, 0.0);
  EXPECT_EQ(zero.sql, 0.0);
  const auto four = equilibrium_variation(4.0);
  EXPECT_DOUBLE_EQ(four.tss, 3.0);
  EXPECT_DOUBLE_EQ(four.sql, 2.0);
}

// Randomized invariants over fields, rates and atom numbers.
class DynamicsProperties : public ::testing::Test {
 protected:
  std::mt19937_64 rng{20240611};
  std::uniform_real_distribution<double> unit{-1.0, 1.0};

  Vec3 random_field() {
    return Vec3(unit(rng), unit(rng), unit(rng)) * 1e-6 * (1.0 + 10.0 * std::abs(unit(rng)));
  }
  RelaxationRates random_rates() {
    const double t1 = 5000.0 * std::abs(unit(rng));
    return {t1, t1 + 5000.0 * std::abs(unit(rng))};
  }
  Mat3 random_rotation() {
    Eigen::Quaterniond q(unit(rng), unit(rng), unit(rng), unit(rng));
    return q.normalized().toRotationMatrix();
  }
};

TEST_F(DynamicsProperties, NoiseIsSymmetricPsdAndSelfConsistent) {
  for (int trial = 0; trial < 200; ++trial) {
    const double n = 1e10 + 1e14 * std::abs(unit(rng));
    const auto dyn = build_dynamics({}, random_field(), random_rates(), n);
    EXPECT_TRUE(dyn.sigma_noise.isApprox(dyn.sigma_noise.transpose()));
    EXPECT_GE(linalg::min_eigenvalue(dyn.sigma_noise), -1e-12 * dyn.sigma_noise.trace());
    EXPECT_EQ(fdt_noise(dyn.f_matrix, dyn.q_eq), dyn.sigma_noise);
    EXPECT_DOUBLE_EQ(dyn.q_eq.trace(), equilibrium_variation(n).tss);
  }
}

TEST_F(DynamicsProperties, PurePrecessionIsOrthogonal) {
  for (int trial = 0; trial < 50; ++trial) {
    const auto dyn = build_dynamics({}, random_field(), {0.0, 0.0}, 1.0);
    const Mat3 e = linalg::expm(-dyn.f_matrix * 1e-4 * (1.0 + std::abs(unit(rng))));
    EXPECT_TRUE((e * e.transpose()).isApprox(Mat3::Identity(), 1e-13));
  }
}

TEST_F(DynamicsProperties, TssOverSqlIsThreeHalves) {
  for (int trial = 0; trial < 50; ++trial) {
    const auto ev = equilibrium_variation(1e14 * std::abs(unit(rng)) + 1.0);
    EXPECT_DOUBLE_EQ(ev.tss / ev.sql, 1.5);
  }
}

TEST_F(DynamicsProperties, BasisCovariance) {
  for (int trial = 0; trial < 100; ++trial) {
    const Vec3 b = random_field();
    const auto rates = random_rates();
    const Mat3 o = random_rotation();
    const auto dyn = build_dynamics({}, b, rates, 1.0);
    const auto rotated = build_dynamics({}, o * b, rates, 1.0);
    EXPECT_TRUE(rotated.f_matrix.isApprox(o * dyn.f_matrix * o.transpose(), 1e-12));
  }
}

TEST(MeasurementModel, DerivedQuantities) {
  const MeasurementModel m{2e-12, 0.5, 1e15, 1e-5};
  EXPECT_TRUE(m.observation_row().isApprox(Row3(0.0, 0.0, 0.5 * 2e-12 * 1e15)));
  EXPECT_DOUBLE_EQ(m.noise_power(), 0.5 * 1e15 / 1e-5);
  EXPECT_THROW((MeasurementModel{1.0, 0.0, 1.0, 1.0}.validate()), std::invalid_argument);
  EXPECT_THROW((MeasurementModel{1.0, 0.5, 1.0, 0.0}.validate()), std::invalid_argument);
}

}  // namespace
}  // namespace spinqnd
