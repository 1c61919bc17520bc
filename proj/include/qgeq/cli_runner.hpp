#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "qgeq/run_config.hpp"

namespace qgeq {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitNonconvergence = 2;
inline constexpr int kExitInfeasible = 3;

/// Library versions recorded in manifests.
json version_info();

/// Runs one validated command, writing its artifacts and manifest.json into
/// cfg.output. Returns the process exit status. Progress goes to `log`.
int run_command(const RunConfig& cfg, std::ostream& log);

/// Full command line: `qgeq <subcommand> --config <path> [--out <dir>] [--jobs <k>] [--seed <u64>]`.
int cli_main(int argc, char** argv);

}  // namespace qgeq
