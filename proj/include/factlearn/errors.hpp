#pragma once

#include <stdexcept>
#include <string>

namespace factlearn {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input files or configuration.
class InputError : public Error {
 public:
  using Error::Error;
};

// Configuration that does not match the expected shape; line is 1-based, 0 if unknown.
class ConfigError : public InputError {
 public:
  ConfigError(const std::string& message, int line = 0)
      : InputError(line > 0 ? "config line " + std::to_string(line) + ": " + message : "config: " + message),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

// Schema, variable order, or model setup that cannot be evaluated.
class SchemaError : public Error {
 public:
  using Error::Error;
};

class FdViolationError : public Error {
 public:
  using Error::Error;
};

// Divergence, exhausted line search, or an iterative method that failed to converge.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace factlearn
