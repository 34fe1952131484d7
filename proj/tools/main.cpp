#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "spinqnd_app/commands.hpp"

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kNumerical = 2 };

int report(const char* kind, const std::string& message, int code, const std::string& field = {}) {
  nlohmann::json err = {{"error", {{"kind", kind}, {"message", message}}}};
  if (!field.empty()) err["error"]["field"] = field;
  std::cerr << err.dump() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace spinqnd;

  CLI::App cli{"Simulation and estimation of QND spin measurements in SERF vapors", "spinqnd"};
  std::string command;
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  unsigned jobs = 1;
  std::string format;
  cli.add_option("command", command, "Command to run")
      ->required()
      ->check(CLI::IsMember(app::command_names()));
  cli.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
  cli.add_option("--out", out_dir, "Output directory (overrides SPINQND_OUT_DIR and output.directory)");
  cli.add_option("--seed", seed, "Base seed (overrides experiment.seed)");
  cli.add_option("--jobs", jobs, "Concurrent scan points")->check(CLI::PositiveNumber);
  cli.add_option("--format", format, "Output formats")->check(CLI::IsMember({"csv", "csv+svg"}));

  try {
    cli.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return cli.exit(e);
  } catch (const CLI::ParseError& e) {
    cli.exit(e);
    return kUsage;
  }

  try {
    app::RunConfig cfg = config_path.empty() ? app::parse_config(nlohmann::json::object())
                                             : app::parse_config_file(config_path);
    if (seed) cfg.experiment.seed = *seed;
    if (!format.empty()) cfg.output.format = format;
    if (!out_dir.empty()) {
      cfg.output.directory = out_dir;
    } else if (const char* env = std::getenv("SPINQND_OUT_DIR"); env && *env) {
      cfg.output.directory = env;
    }

    const auto cmd = *app::parse_command(command);
    const auto result = app::run_command(cmd, cfg, {jobs});
    app::write_outputs(result, cfg.output.directory);
    std::cout << fmt::format("{}: wrote {} files to {} (config {})\n", command,
                             result.artifacts.size() + 1, cfg.output.directory,
                             result.manifest["config_hash"].get<std::string>().substr(0, 12));
    return kOk;
  } catch (const app::ConfigError& e) {
    return report("config", e.what(), kUsage, e.path());
  } catch (const NumericalError& e) {
    return report("numerical", e.what(), kNumerical);
  } catch (const std::invalid_argument& e) {
    return report("invalid_argument", e.what(), kUsage);
  } catch (const std::exception& e) {
    return report("runtime", e.what(), kUsage);
  }
}
