#pragma once

#include <stdexcept>
#include <string>

namespace emoprobe {

// Root of every error thrown by the library. Subclasses name the failure
// category so callers (and the CLI exit-code mapping) can discriminate.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class CorruptionError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class DuplicateKey : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class InsufficientData : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class NotPsdError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class CheckpointMismatch : public Error {
 public:
  using Error::Error;
};

}  // namespace emoprobe
