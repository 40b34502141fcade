#pragma once

#include <stdexcept>
#include <string>

namespace crsense {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Iterative numerics that failed to reach tolerance (series, quadrature,
/// bisection) or could not bracket a root.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class BracketError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Config text that does not parse. Carries the 1-based line number, 0 when
/// the problem is not tied to a line.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& what, int line)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

/// A parsed value that violates a configuration invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

}  // namespace crsense
