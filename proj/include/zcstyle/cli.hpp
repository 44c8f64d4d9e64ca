// Copyright 2026 The zcstyle Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <ostream>

namespace zcstyle {

/// Process exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitUsage = 2,
  kExitIo = 3,
  kExitFormat = 4,
  kExitShape = 5,
  kExitVerification = 6,
  kExitResource = 7,
  kExitUnsupported = 8,
};

/// Entry point of the `zcstyle` tool: inspect, prune, stylize, bench and
/// metrics subcommands. Reports go to `out`; failures print one
/// "error: <kind>: <message>" line to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace zcstyle
