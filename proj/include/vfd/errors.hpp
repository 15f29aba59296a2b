#pragma once

#include <stdexcept>
#include <string>

namespace vfd {

// Every error raised by the library derives from Error so callers can map
// failures to exit codes by category.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes disagree with what an operation requires.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A caller violated an operation precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or out-of-range input data (audio, pixels, paths).
class InputError : public Error {
 public:
  using Error::Error;
};

// Dataset cannot satisfy a sampling or evaluation requirement.
class DataError : public Error {
 public:
  using Error::Error;
};

// Corrupt or incompatible file format.
class FormatError : public Error {
 public:
  using Error::Error;
};

// A forward or backward pass produced NaN or Inf.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace vfd
