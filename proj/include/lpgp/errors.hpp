#ifndef LPGP_ERRORS_HPP
#define LPGP_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace lpgp {

// Invalid configuration or arguments supplied by the caller.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DimensionMismatch : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class UnsupportedFamily : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class DomainError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// Failures caused by finite-precision arithmetic.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class OverflowDetected : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class NotPositiveDefinite : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class InnerSolveFailed : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class EigFailure : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class NonFinite : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class SolverBreakdown : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

// Input data problems.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string &what, long row, long column)
      : std::runtime_error(what), row_(row), column_(column) {}
  long row() const { return row_; }
  long column() const { return column_; }

 private:
  long row_;
  long column_;
};

class EmptyDataset : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace lpgp

#endif
