#pragma once

#include <stdexcept>
#include <string>

namespace mcusum {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A parameter lies outside its documented domain (bad L/m, index out of range, ...).
class InvalidParameter : public Error {
 public:
  using Error::Error;
};

/// A numerical evaluation is undefined (zero density, all-zero weights, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// An operation was applied to an object it does not support.
class InvalidUse : public Error {
 public:
  using Error::Error;
};

/// Experiment configuration failed validation.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Threshold calibration could not bracket the target.
class CalibrationError : public Error {
 public:
  using Error::Error;
};

}  // namespace mcusum
