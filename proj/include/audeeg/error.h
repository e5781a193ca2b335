#pragma once

#include <stdexcept>
#include <string>

namespace audeeg {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input violates a documented constraint (shape, range, finiteness).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Matrix or tensor dimensions do not fit together.
class DimensionError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// A numerical procedure failed (non-convergence, non-positive spectrum, NaN).
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed text or binary input. Messages carry the location.
class ParseError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// An operation was called out of order, e.g. backward before forward.
class StateError : public Error {
 public:
  using Error::Error;
};

}  // namespace audeeg
