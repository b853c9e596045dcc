#pragma once

#include <stdexcept>
#include <string>

namespace nvloc {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input outside the physical or mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Malformed input files, unknown identifiers, schema violations.
class InputError : public Error {
 public:
  using Error::Error;
};

/// The data cannot determine the requested parameters.
class IdentifiabilityError : public Error {
 public:
  using Error::Error;
};

/// An iterative solver did not reach its tolerance.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace nvloc
