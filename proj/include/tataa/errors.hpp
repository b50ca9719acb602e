// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace tataa {

// Failure categories, mapped 1:1 to CLI exit codes.
enum ExitCode : int {
  kExitOk = 0,
  kExitParse = 2,
  kExitCompile = 3,
  kExitRun = 4,
  kExitVerify = 5,
};

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CompileError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct VerifyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace tataa
