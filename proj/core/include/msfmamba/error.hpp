#pragma once

#include <stdexcept>
#include <string>

namespace msf {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes do not line up for an operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A configuration value is outside its legal range.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A precondition on values (not shapes) was violated, e.g. a non-positive timescale.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// An operation produced NaN or Inf from finite inputs.
class NumericError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace msf
