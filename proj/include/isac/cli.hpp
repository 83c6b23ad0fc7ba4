#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace isac::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Malformed command line. `help` marks an explicit --help request (exit 0).
struct UsageError : std::runtime_error {
  UsageError(const std::string& msg, bool help_request = false) : std::runtime_error(msg), help(help_request) {}
  bool help;
};

struct Command {
  std::string verb;  // run | eval | baseline | plotdata | inspect
  std::string config;
  std::vector<std::string> overrides;  // dotted key=value, applied in order
  std::optional<std::uint64_t> seed;
  std::string out = "results";
  std::string checkpoint;
  std::string results;
  std::string key;
};

Command parse_args(int argc, const char* const* argv);

/// Runs the command; returns the process exit code.
int execute(const Command& cmd, std::ostream& out, std::ostream& err);

/// parse_args + execute, mapping usage errors to exit code 2.
int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace isac::cli
