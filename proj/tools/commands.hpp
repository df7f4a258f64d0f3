#pragma once

#include <filesystem>
#include <optional>
#include <string>

namespace mplab::cli {

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> threads;
};

/// Runs one command from its config file. Returns the process exit code:
/// 0 on success, 1 for invalid configs or inputs, 2 for runtime failures.
int run_command(const std::string& command, const std::filesystem::path& config_path,
                const Overrides& overrides);

}  // namespace mplab::cli
