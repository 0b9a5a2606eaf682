#pragma once

#include <stdexcept>
#include <string>

namespace hyp {

// Base of every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-broadcastable or otherwise inconsistent tensor extents.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Invalid manifold dimension or misaligned man_dim extents.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Two objects that reference different manifold instances were combined.
class ManifoldMismatchError : public Error {
 public:
  using Error::Error;
};

// A documented precondition was violated (non-scalar loss, empty input, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Bad run configuration (unknown key, value out of range).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input files and checkpoints.
class DataError : public Error {
 public:
  using Error::Error;
};

// Non-finite values where finite ones are required (NaN loss).
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace hyp
