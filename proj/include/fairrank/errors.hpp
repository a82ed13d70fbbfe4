#pragma once

#include <stdexcept>
#include <string>

namespace fairrank {

/// Malformed or inconsistent input data (files, flags, formats).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values encountered where finite math is required.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fairrank
