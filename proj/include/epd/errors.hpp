#pragma once

#include <stdexcept>
#include <string>

namespace epd {

// Shape/arity violations in numeric ops or model wiring.
struct DimensionError : std::runtime_error {
  explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

// NaN/Inf encountered, or a loss diverged.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed files, invariant violations in records, vocab mismatches.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad config keys/values or incompatible flag combinations.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace epd
