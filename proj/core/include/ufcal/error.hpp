#pragma once

#include <stdexcept>
#include <string>

namespace ufcal {

/// Base class for every error raised by the library.
///
/// Errors split into two families so front ends can map them to exit codes:
/// input problems (bad data, bad configuration) and numerical failures.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InputError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

// Input family.
class DomainError : public InputError {
 public:
  using InputError::InputError;
};

class ShapeError : public InputError {
 public:
  using InputError::InputError;
};

class ConfigError : public InputError {
 public:
  using InputError::InputError;
};

class ParseError : public InputError {
 public:
  using InputError::InputError;
};

class ContractError : public InputError {
 public:
  using InputError::InputError;
};

// Numerical family.
class DegenerateError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class ConvergenceError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class SingularityError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class SeparationError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace ufcal
