#pragma once

#include <stdexcept>
#include <string>

namespace ppko {

/// Violated precondition or dimension mismatch at a module boundary.
struct ContractError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Input outside the mathematical domain of an operation (e.g. a parameter
/// point outside the distribution support).
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

/// Numerical failure: singular systems, non-finite values, divergence.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Configuration file problem, carries the offending line when known.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg, int line = 0)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + msg : msg),
        line_number(line) {}
  int line_number = 0;
};

/// File I/O or format failure.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace ppko
