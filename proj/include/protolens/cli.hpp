// SPDX-License-Identifier: Apache-2.0
//
// The protolens command line: prepare, train, eval, reconstruct, rules,
// embeddings and attention subcommands.
#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace protolens::cli {

inline constexpr const char* kToolVersion = "0.1.0";

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Runs one command. `args` excludes the program name. Failures print one
/// JSON object {"error": kind, "message": text} on `err` and return a
/// non-zero exit code (2 for usage errors, 1 otherwise).
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace protolens::cli
