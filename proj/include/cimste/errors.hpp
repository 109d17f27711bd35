// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace cimste {

// Base for all library errors so callers can catch one type.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape / extent mismatch between operands.
struct DimensionError : Error {
  using Error::Error;
};

// Bad numeric payload (NaN/Inf input, out-of-range label, ...).
struct DataError : Error {
  using Error::Error;
};

// Invalid configuration value or structure.
struct ConfigError : Error {
  using Error::Error;
};

// Value falls outside a representable integer range.
struct RangeError : Error {
  using Error::Error;
};

// API contract violation (e.g. backward on a non-scalar).
struct ContractError : Error {
  using Error::Error;
};

// Problem size exceeds a configured limit.
struct ResourceError : Error {
  using Error::Error;
};

// Degenerate input that makes a statistic undefined.
struct DegenerateInputError : Error {
  using Error::Error;
};

// Failure raised while training (NaN gradients, divergence).
struct TrainingError : Error {
  using Error::Error;
};

// Filesystem problem; message carries the offending path.
struct IoError : Error {
  using Error::Error;
};

// Bad command line or config-override usage.
struct UsageError : Error {
  using Error::Error;
};

}  // namespace cimste
