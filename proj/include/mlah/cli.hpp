#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace mlah {

enum ExitStatus : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitNumeric = 2,
  kExitCheckFailed = 3,
};

struct CliCommand {
  std::string subcommand;  // train | baseline | sweep | report | gradcheck
  std::filesystem::path config_path;
  std::filesystem::path output_dir;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;  // dotted key=value
  int verbosity = 1;                   // 0 quiet, 1 progress, 2 per-rollout
  /// report only: where to read recorded metrics (defaults to output_dir).
  std::filesystem::path input_dir;
  int final_window = 100;
};

/// Output directory used when none is given: $MLAH_OUTPUT_DIR or ./mlah_output.
std::filesystem::path default_output_dir();

/// Runs a parsed command. Never throws; maps failures to exit statuses.
int dispatch(const CliCommand& command, std::ostream& out, std::ostream& err);

/// Parses argv and dispatches.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mlah
