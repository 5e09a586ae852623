#pragma once

#include <stdexcept>
#include <string>

namespace g5 {

// Error taxonomy, mapped to process exit codes by the CLI:
//   config / contract violations -> 2
//   numeric failures             -> 3
//   i/o failures                 -> 4
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Wrong tensor rank or mismatched dimensions.
struct ShapeError : Error {
  using Error::Error;
};

// A precondition of an operation was violated.
struct ContractError : Error {
  using Error::Error;
};

// Non-finite values where finite ones are required.
struct NumericError : Error {
  using Error::Error;
};

// Bad or unknown configuration keys / values.
struct ConfigError : Error {
  using Error::Error;
};

// Malformed input files.
struct ParseError : Error {
  using Error::Error;
};

// Filesystem-level failures.
struct IoError : Error {
  using Error::Error;
};

// Corrupt or truncated binary payloads.
struct IntegrityError : Error {
  using Error::Error;
};

// Format version not supported by this build.
struct VersionError : Error {
  using Error::Error;
};

// Label access (or a supervised task) attempted where the run mode forbids it.
struct ModeViolationError : Error {
  using Error::Error;
};

// Pipeline stages invoked out of order.
struct PipelineOrderError : Error {
  using Error::Error;
};

}  // namespace g5
