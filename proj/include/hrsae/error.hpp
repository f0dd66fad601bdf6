#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hrsae {

// Broad failure classes. The CLI maps these onto its exit codes.
enum class ErrorKind {
  Usage = 1,
  Data = 2,
  Numeric = 3,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(ErrorKind::Usage, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::Data, what) {}
};

/// Malformed input file; carries the 1-based line number.
class ParseError : public DataError {
 public:
  ParseError(std::size_t line, const std::string& what)
      : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// An oracle quantity was requested but the study variable is not known
/// for the whole population.
class UnavailableOracleError : public DataError {
 public:
  explicit UnavailableOracleError(const std::string& what) : DataError(what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorKind::Numeric, what) {}
};

/// Degenerate input (zero variance, singular fit, empty bandwidth, ...).
class DegenerateError : public NumericError {
 public:
  explicit DegenerateError(const std::string& what) : NumericError(what) {}
};

/// An iterative search hit its step cap.
class NoConvergenceError : public NumericError {
 public:
  NoConvergenceError(const std::string& what, double last_value, std::size_t last_count)
      : NumericError(what), last_value_(last_value), last_count_(last_count) {}

  double last_value() const noexcept { return last_value_; }
  std::size_t last_count() const noexcept { return last_count_; }

 private:
  double last_value_;
  std::size_t last_count_;
};

}  // namespace hrsae
