#pragma once

#include <stdexcept>
#include <string>

namespace invnet {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Extents that do not fit the operation (zero extents, channel mismatch, ...).
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf produced or consumed where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Operation called in the wrong state (backward before forward, empty batch).
class StateError : public Error {
 public:
  using Error::Error;
};

/// Malformed model or image file. `field()` names the offending part.
class FormatError : public Error {
 public:
  FormatError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Dataset-level problems: missing directories, empty classes, too few items.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Invalid argument values that are not shape related.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

}  // namespace invnet
