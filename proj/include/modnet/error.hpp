#pragma once

#include <stdexcept>
#include <string>

namespace modnet {

// Bad user-facing configuration (rejected before any work starts). CLI exit 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor / layer dimension mismatch.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// API used out of order (backward without a recorded tape, duplicate ledger
// record, ...).
struct StateError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid argument to an otherwise well-configured operation.
struct ArgumentError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite values or diverging optimization. CLI exit 3.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace modnet
