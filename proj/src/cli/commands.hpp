#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace isdiff::cli {

struct CliOverrides {
    std::optional<std::string> out_dir;
    std::optional<uint64_t> seed;
    std::optional<int> threads;
};

// Each command reads a JSON config, writes CSV outputs plus a manifest.json
// into the run directory, and returns a process exit code:
//   0 success, 1 config/usage error, 2 runtime failure or partial results,
//   3 failed validation (cmd_check).
int cmd_estimate(const std::string& config_path, const CliOverrides& ov);
int cmd_expand(const std::string& config_path, const CliOverrides& ov);
int cmd_check(const std::string& config_path, const CliOverrides& ov);
int cmd_compare(const std::string& config_path, const CliOverrides& ov);
int cmd_pde(const std::string& config_path, const CliOverrides& ov);

}  // namespace isdiff::cli
