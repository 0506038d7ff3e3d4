#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace a3t {

enum ExitCode : int {
  exit_ok = 0,
  exit_failure = 1,  // gradient check failed, or an unexpected error
  exit_config = 2,
  exit_data = 3,
  exit_diverged = 4,
};

/// Runs one command line (without the program name), e.g.
/// {"train", "--synth", "10x2000", "--out-dir", "run"}.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Flat `key = value` file; '#' starts a comment. Throws ConfigError on a
/// line without '='.
std::map<std::string, std::string> read_flat_config(const std::filesystem::path& path);

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

}  // namespace a3t
