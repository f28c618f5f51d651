#pragma once

#include <stdexcept>
#include <string>

namespace askac {

// Bad user input: unknown config keys, malformed values, shape mismatches at construction.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller broke a documented precondition (stepping a finished episode, out-of-range target).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// NaN/Inf showed up where a finite value is required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The remote advisor sent something that does not follow the advisor protocol.
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace askac
