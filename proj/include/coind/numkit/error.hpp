#pragma once

#include <stdexcept>
#include <string>

namespace coind {

/// Base class for every error the library raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible matrix / vector dimensions.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// An operation was invoked in the wrong state (e.g. backward without a tape).
class StateError : public Error {
 public:
  using Error::Error;
};

/// NaN / Inf produced or consumed, or a sampler diverged.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Invalid or inconsistent configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A condition vector that no training tuple is consistent with.
class SupportError : public Error {
 public:
  using Error::Error;
};

/// Malformed, truncated or version-mismatched file.
class FormatError : public Error {
 public:
  using Error::Error;
};

class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

}  // namespace coind
