#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "spinqnd_app/config.hpp"

namespace spinqnd::app {

enum class Command { simulate, filter, spectrum, calibrate, witness, scan_field, scan_gradient };

std::optional<Command> parse_command(std::string_view name);
std::string_view command_name(Command c);
const std::vector<std::string>& command_names();

struct Artifact {
  std::string name;
  std::string content;
};

struct RunResult {
  std::vector<Artifact> artifacts;
  nlohmann::json manifest;

  [[nodiscard]] const Artifact* find(std::string_view name) const;
};

struct RunOptions {
  unsigned jobs = 1;
};

/// Runs one command entirely in memory. Throws ConfigError, NumericalError,
/// std::invalid_argument or std::runtime_error; nothing is written.
RunResult run_command(Command cmd, const RunConfig& cfg, const RunOptions& options = {});

/// Writes every artifact and manifest.json into `dir`, creating it.
void write_outputs(const RunResult& result, const std::filesystem::path& dir);

std::string sha256_hex(std::string_view data);

/// SHA-256 of the resolved config with the output block removed, so the same
/// experiment hashes identically wherever it is written.
std::string config_hash(const RunConfig& cfg);

}  // namespace spinqnd::app
