#pragma once

#include <stdexcept>
#include <string>

namespace mner {

// Every error raised by the library derives from Error. The CLI maps the
// subclasses onto exit codes (config 2, data 3, numerical 4).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes do not agree for an operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A caller broke a documented precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Missing or inconsistent input data (unresolved image ids, missing files).
class DataError : public Error {
 public:
  using Error::Error;
};

// Malformed corpus file. Carries the 1-based line number.
class ParseError : public DataError {
 public:
  ParseError(const std::string& msg, std::size_t line)
      : DataError("line " + std::to_string(line) + ": " + msg), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Malformed feature sidecar, vocab file or checkpoint.
class FormatError : public DataError {
 public:
  using DataError::DataError;
};

// NaN/Inf produced during a forward pass or a loss evaluation.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace mner
