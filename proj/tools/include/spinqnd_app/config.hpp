#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "spinqnd/physmodel.hpp"
#include "spinqnd/witness.hpp"

namespace spinqnd::app {

inline constexpr int kSchemaVersion = 1;

/// Invalid or inconsistent configuration. `path` is the dotted field path.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string path, const std::string& what)
      : std::runtime_error(path.empty() ? what : path + ": " + what), path_(std::move(path)) {}
  [[nodiscard]] const std::string& path() const { return path_; }

 private:
  std::string path_;
};

struct DynamicsConfig {
  std::optional<double> larmor_frequency;  // Hz
  std::optional<double> b_magnitude;       // T
  Vec3 b_direction = Vec3(1.0, 1.0, 1.0);
  double t1_inv = 100.0;
  std::optional<double> t2_inv;
  /// t2_inv = t1_inv + pi * se_linewidth(omega_l, r_se) when set.
  bool se_broadening = true;
  /// Overrides sigma_se * n_rb * v_bar.
  std::optional<double> r_se;
};

struct PriorConfig {
  Vec3 mean = Vec3::Zero();
  /// Defaults to the thermal covariance q_eq.
  std::optional<Mat3> covariance;
};

struct ExperimentConfig {
  std::uint64_t seed = 20160601;
  std::size_t n_steps = 200000;
  std::optional<std::string> input;
  std::size_t segment_length = 16384;
  double overlap = 0.5;
  std::optional<std::pair<double, double>> fit_window;
  std::vector<double> larmor_frequencies;  // Hz
  std::vector<double> gradients;           // T/m
  GradientMode gradient_mode = GradientMode::isotropic;
  std::optional<double> delta_z;  // m
  double decay_duration = 2e-3;
  std::size_t series_points = 200;
  bool require_steady_state = true;
};

struct OutputConfig {
  std::string directory = "out";
  std::string format = "csv";
};

struct RunConfig {
  int schema_version = kSchemaVersion;
  PhysicalParams physical;
  DynamicsConfig dynamics;
  MeasurementModel measurement{1.1e-12, 0.8, 4e15, 5e-6};
  PriorConfig prior;
  ExperimentConfig experiment;
  OutputConfig output;
};

/// Applies defaults and validates. Unknown keys are rejected.
RunConfig parse_config(const nlohmann::json& j);
RunConfig parse_config_file(const std::filesystem::path& path);

/// Every parameter, defaults included, in schema order.
nlohmann::json to_json(const RunConfig& cfg);

/// Spin-exchange rate actually used (override or sigma_se n v).
double effective_se_rate(const RunConfig& cfg);

/// Model at the configured field, or at `larmor_hz` along the configured
/// direction when given.
SystemModel system_model(const RunConfig& cfg, std::optional<double> larmor_hz = std::nullopt);

/// Quantities derived from the configuration, for the manifest.
nlohmann::json derived_json(const RunConfig& cfg);

}  // namespace spinqnd::app
