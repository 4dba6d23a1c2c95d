#pragma once

#include <stdexcept>
#include <string>

namespace spikefuse {

/// Raised when a caller violates an operation's precondition (shape, range, format).
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a computation produces or receives non-finite values.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace spikefuse
