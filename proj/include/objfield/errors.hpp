#pragma once

#include <stdexcept>
#include <string>

namespace objfield {

// Error taxonomy mirrored by the CLI exit codes:
//   1 usage, 2 config, 3 data, 4 numerical.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Precondition violation on an operation's inputs (bad pixel, shape
// mismatch, degenerate ray). Reported as a data error at the CLI boundary.
struct InputDomainError : DataError {
  using DataError::DataError;
};

// K masks exceed the N slots the field was built with.
struct CapacityError : ConfigError {
  using ConfigError::ConfigError;
};

// Non-finite loss or parameters during optimization.
struct DivergenceError : NumericalError {
  using NumericalError::NumericalError;
};

struct UndefinedMetricError : DataError {
  using DataError::DataError;
};

}  // namespace objfield
