#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace fedeval::cli {

/// Exit codes of the command-line tool.
enum ExitCode : int { kOk = 0, kUsage = 1, kNumerical = 2 };

struct CommandEntry {
  std::string_view name;
  /// Library operations reachable through this subcommand.
  std::vector<std::string_view> operations;
};

const std::vector<CommandEntry>& command_table();

/// Names of the subcommands actually registered with the parser.
std::vector<std::string> registered_subcommands();

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// "start:stop:step" inclusive of stop within 1e-12, or a single number.
std::vector<double> parse_grid(std::string_view text);

}  // namespace fedeval::cli
