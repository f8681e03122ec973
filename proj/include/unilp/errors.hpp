#pragma once

#include <stdexcept>
#include <string>

namespace unilp {

/// Invalid configuration, flags or preconditions. CLI exit code 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Unusable input data: malformed files, graphs too small or too dense to
/// sample from. CLI exit code 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values or shape violations inside numeric code. CLI exit code 3.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace unilp
