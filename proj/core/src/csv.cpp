#include "spinqnd/csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

namespace spinqnd::csv {

void Table::add_row(std::vector<double> row) {
  if (row.size() != header.size()) {
    throw std::invalid_argument("csv::Table: row width does not match header");
  }
  rows.push_back(std::move(row));
}

std::string Table::str() const {
  fmt::memory_buffer buf;
  for (std::size_t i = 0; i < header.size(); ++i) {
    fmt::format_to(std::back_inserter(buf), "{}{}", i ? "," : "", header[i]);
  }
  buf.push_back('\n');
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      fmt::format_to(std::back_inserter(buf), "{}{}", i ? "," : "", row[i]);
    }
    buf.push_back('\n');
  }
  return fmt::to_string(buf);
}

namespace {

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    auto field = line.substr(start, comma == std::string_view::npos ? line.npos : comma - start);
    while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
    while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r')) {
      field.remove_suffix(1);
    }
    out.push_back(field);
    if (comma == std::string_view::npos) {
      return out;
    }
    start = comma + 1;
  }
}

[[noreturn]] void fail(std::string_view source, std::size_t line, std::string_view what) {
  throw std::runtime_error(fmt::format("{}:{}: {}", source, line, what));
}

}  // namespace

Table parse(std::string_view text, const std::vector<std::string_view>& columns,
            std::string_view source) {
  Table t;
  std::size_t line_no = 0;
  bool have_header = false;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;

    const auto fields = split(line);
    if (!have_header) {
      if (fields.size() != columns.size() ||
          !std::equal(fields.begin(), fields.end(), columns.begin())) {
        std::string want;
        for (auto c : columns) want += (want.empty() ? "" : ",") + std::string(c);
        fail(source, line_no, "expected header '" + want + "'");
      }
      for (auto c : columns) t.header.emplace_back(c);
      have_header = true;
      continue;
    }
    if (fields.size() != columns.size()) {
      fail(source, line_no, "wrong number of fields");
    }
    std::vector<double> row(fields.size());
    for (std::size_t i = 0; i < fields.size(); ++i) {
      const auto* first = fields[i].data();
      const auto* last = first + fields[i].size();
      const auto [ptr, ec] = std::from_chars(first, last, row[i]);
      if (ec != std::errc() || ptr != last) {
        fail(source, line_no, "not a number: '" + std::string(fields[i]) + "'");
      }
    }
    t.rows.push_back(std::move(row));
  }
  if (!have_header) {
    fail(source, line_no, "missing header");
  }
  return t;
}

Table read(const std::filesystem::path& path, const std::vector<std::string_view>& columns) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open " + path.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), columns, path.string());
}

Table trajectory_table(const SpinTrajectory& traj) {
  Table t{{"time", "Jx", "Jy", "Jz"}, {}};
  t.rows.reserve(traj.size());
  for (std::size_t k = 0; k < traj.size(); ++k) {
    const Vec3& j = traj.spins[k];
    t.rows.push_back({traj.times[k], j.x(), j.y(), j.z()});
  }
  return t;
}

Table photocurrent_table(const PhotocurrentRecord& rec) {
  Table t{{"time", "I"}, {}};
  t.rows.reserve(rec.size());
  for (std::size_t k = 0; k < rec.size(); ++k) {
    t.rows.push_back({rec.times[k], rec.samples[k]});
  }
  return t;
}

Table filter_table(const FilterRun& run, const std::vector<double>& times) {
  if (times.size() != run.states.size()) {
    throw std::invalid_argument("filter_table: times and states differ in length");
  }
  Table t{{"time", "Jx_hat", "Jy_hat", "Jz_hat", "Pxx", "Pyy", "Pzz", "trace"}, {}};
  t.rows.reserve(times.size());
  for (std::size_t k = 0; k < times.size(); ++k) {
    const auto& s = run.states[k];
    t.rows.push_back({times[k], s.estimate.x(), s.estimate.y(), s.estimate.z(),
                      s.covariance(0, 0), s.covariance(1, 1), s.covariance(2, 2),
                      s.covariance.trace()});
  }
  return t;
}

Table spectrum_table(const Spectrum& s) {
  Table t{{"frequency", "psd"}, {}};
  t.rows.reserve(s.psd.size());
  for (std::size_t k = 0; k < s.psd.size(); ++k) {
    t.rows.push_back({s.frequencies[k], s.psd[k]});
  }
  return t;
}

Table calibration_points_table(const std::vector<CalibrationPoint>& pts) {
  Table t{{"omega_l", "delta_nu"}, {}};
  for (const auto& p : pts) {
    t.rows.push_back({p.omega_l, p.delta_nu});
  }
  return t;
}

namespace {

void require_uniform(const std::vector<double>& times) {
  if (times.empty()) {
    throw std::runtime_error("csv: table has no rows");
  }
  if (times.size() < 2) return;
  const double dt = times[1] - times[0];
  if (!(dt > 0.0)) {
    throw std::runtime_error("csv: times must be strictly increasing");
  }
  for (std::size_t k = 1; k < times.size(); ++k) {
    if (std::abs((times[k] - times[k - 1]) - dt) > 1e-6 * dt) {
      throw std::runtime_error("csv: times must be uniformly spaced");
    }
  }
}

}  // namespace

SpinTrajectory trajectory_from(const Table& t) {
  SpinTrajectory traj;
  for (const auto& r : t.rows) {
    traj.times.push_back(r[0]);
    traj.spins.emplace_back(r[1], r[2], r[3]);
  }
  require_uniform(traj.times);
  return traj;
}

PhotocurrentRecord photocurrent_from(const Table& t) {
  PhotocurrentRecord rec;
  for (const auto& r : t.rows) {
    rec.times.push_back(r[0]);
    rec.samples.push_back(r[1]);
  }
  require_uniform(rec.times);
  return rec;
}

std::vector<CalibrationPoint> calibration_points_from(const Table& t) {
  std::vector<CalibrationPoint> pts;
  for (const auto& r : t.rows) {
    pts.push_back({r[0], r[1]});
  }
  return pts;
}

}  // namespace spinqnd::csv
