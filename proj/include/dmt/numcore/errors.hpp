#pragma once

#include <stdexcept>
#include <string>

namespace dmt {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes violate an op's algebraic rule.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Argument outside an op's contract (bad axis, unknown op kind, ...).
class ValueError : public Error {
 public:
  using Error::Error;
};

/// A computation produced NaN or infinity where a finite value is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// File-format and filesystem problems.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace dmt
