#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "spinqnd/csv.hpp"
#include "test_support.hpp"

namespace spinqnd {
namespace {

TEST(Csv, PhotocurrentRoundTripIsBitExact) {
  const auto model = testing::strong_coupling_model();
  const auto dyn = model.dynamics();
  const auto dm = discretize(dyn, model.measurement.delta);
  const auto traj = simulate_spin(dm, dyn.q_eq, 500, 3);
  const auto rec = measure_photocurrent(traj, model.measurement, 4);

  const auto text = csv::photocurrent_table(rec).str();
  const auto back = csv::photocurrent_from(csv::parse(text, csv::kPhotocurrentColumns));
  EXPECT_EQ(back.times, rec.times);
  EXPECT_EQ(back.samples, rec.samples);
  EXPECT_EQ(csv::photocurrent_table(back).str(), text);

  const auto ttext = csv::trajectory_table(traj).str();
  const auto tback = csv::trajectory_from(csv::parse(ttext, csv::kTrajectoryColumns));
  ASSERT_EQ(tback.spins.size(), traj.spins.size());
  for (std::size_t i = 0; i < traj.spins.size(); ++i) {
    EXPECT_EQ(tback.spins[i], traj.spins[i]);
  }
}

TEST(Csv, RandomValuesRoundTrip) {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> mant(-1.0, 1.0);
  std::uniform_int_distribution<int> expo(-300, 300);
  std::vector<CalibrationPoint> pts;
  for (int i = 0; i < 1000; ++i) {
    pts.push_back({std::ldexp(mant(rng), expo(rng)), std::ldexp(mant(rng), expo(rng))});
  }
  const auto back = csv::calibration_points_from(
      csv::parse(csv::calibration_points_table(pts).str(), csv::kCalibrationColumns));
  ASSERT_EQ(back.size(), pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    EXPECT_EQ(back[i].omega_l, pts[i].omega_l);
    EXPECT_EQ(back[i].delta_nu, pts[i].delta_nu);
  }
}

TEST(Csv, CommentsAndCrlf) {
  const auto t = csv::parse("# generated\r\ntime,I\r\n0,1.5\r\n1e-3,-2\r\n", csv::kPhotocurrentColumns);
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[1][1], -2.0);
}

void expect_error(std::string_view text, std::string_view fragment) {
  try {
    csv::parse(text, csv::kPhotocurrentColumns, "rec.csv");
    FAIL() << "no error for: " << text;
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
  }
}

TEST(Csv, MalformedInput) {
  expect_error("", "rec.csv:0: missing header");
  expect_error("t,I\n0,1\n", "rec.csv:1: expected header 'time,I'");
  expect_error("time,I\n0,1\n1,2,3\n", "rec.csv:3: wrong number of fields");
  expect_error("time,I\n0,abc\n", "rec.csv:2: not a number: 'abc'");
  expect_error("time,I\n0,1x\n", "rec.csv:2: not a number");
}

TEST(Csv, NonUniformTimes) {
  EXPECT_THROW(csv::photocurrent_from(csv::parse("time,I\n0,1\n1,2\n3,4\n", csv::kPhotocurrentColumns)),
               std::runtime_error);
  EXPECT_THROW(csv::photocurrent_from(csv::parse("time,I\n", csv::kPhotocurrentColumns)),
               std::runtime_error);
}

TEST(Csv, MissingFile) {
  EXPECT_THROW(csv::read("/nonexistent/rec.csv", csv::kPhotocurrentColumns), std::runtime_error);
}

TEST(Csv, TableRejectsRaggedRow) {
  csv::Table t{{"a", "b"}, {}};
  EXPECT_THROW(t.add_row({1.0}), std::invalid_argument);
  t.add_row({1.0, 0.1});
  EXPECT_EQ(t.str(), "a,b\n1,0.1\n");
}

}  // namespace
}  // namespace spinqnd
