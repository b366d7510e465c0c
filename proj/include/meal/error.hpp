#pragma once

#include <stdexcept>
#include <string>

namespace meal {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent configuration (unknown key, bad architecture name, K = 0, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Tensor shapes or widths that do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values where finite ones are required.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// File-system or serialization failure. The message names the file.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace meal
