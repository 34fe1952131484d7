#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "spinqnd/estimator.hpp"
#include "spinqnd/spectra.hpp"

namespace spinqnd::csv {

/// Column-named numeric table. Numbers are written in shortest round-trip
/// form so that identical inputs give byte-identical files.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  void add_row(std::vector<double> row);
  [[nodiscard]] std::string str() const;
};

/// Parses a numeric CSV whose header must equal `columns`. Throws
/// std::runtime_error with the file name and line on malformed input.
Table read(const std::filesystem::path& path, const std::vector<std::string_view>& columns);
Table parse(std::string_view text, const std::vector<std::string_view>& columns,
            std::string_view source = "<memory>");

Table trajectory_table(const SpinTrajectory& traj);
Table photocurrent_table(const PhotocurrentRecord& rec);
/// time, estimate (3), posterior covariance diagonal (3), trace.
Table filter_table(const FilterRun& run, const std::vector<double>& times);
Table spectrum_table(const Spectrum& s);
Table calibration_points_table(const std::vector<CalibrationPoint>& pts);

SpinTrajectory trajectory_from(const Table& t);
PhotocurrentRecord photocurrent_from(const Table& t);
std::vector<CalibrationPoint> calibration_points_from(const Table& t);

inline const std::vector<std::string_view> kTrajectoryColumns{"time", "Jx", "Jy", "Jz"};
inline const std::vector<std::string_view> kPhotocurrentColumns{"time", "I"};
inline const std::vector<std::string_view> kCalibrationColumns{"omega_l", "delta_nu"};

}  // namespace spinqnd::csv
