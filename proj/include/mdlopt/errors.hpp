#pragma once

#include <stdexcept>
#include <string>

namespace mdlopt {

// Process exit codes used by the CLI. Argument, data and runtime failures
// map to distinct codes so scripts can tell them apart.
enum ExitCode : int {
  kExitOk = 0,
  kExitArgument = 2,
  kExitData = 3,
  kExitRuntime = 4,
};

// Bad user input: invalid option value, out-of-range parameter, unknown enum.
struct ArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Anything wrong with files on disk or their contents.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Truncated file, bad magic, failed checksum.
struct CorruptFileError : DataError {
  using DataError::DataError;
};

// File carries a container version this build does not understand.
struct VersionError : DataError {
  using DataError::DataError;
};

// Checkpoint/config combination that cannot be loaded together.
struct ConfigMismatchError : DataError {
  using DataError::DataError;
};

// Failures inside long-running computations (diverged training, NaN loss,
// exhausted retry budgets).
struct RuntimeFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ArgumentError*>(&e)) return kExitArgument;
  if (dynamic_cast<const DataError*>(&e)) return kExitData;
  return kExitRuntime;
}

}  // namespace mdlopt
