#pragma once

#include <stdexcept>
#include <string>

namespace gcot {

// Error categories double as CLI exit codes.
enum class ErrorKind { config = 2, data = 3, numeric = 4 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};

/// Missing files, malformed records, failed referential checks.
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

/// Checkpoint header problems: bad magic or unsupported version.
class FormatError : public DataError {
 public:
  using DataError::DataError;
};

/// Checkpoint payload inconsistent with its header.
class CorruptionError : public DataError {
 public:
  using DataError::DataError;
};

/// A class or graph cannot support the requested sampling.
class InsufficientDataError : public DataError {
 public:
  using DataError::DataError;
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorKind::numeric, what) {}
};

class DimensionError : public NumericError {
 public:
  using NumericError::NumericError;
};

/// Zero-norm vectors and other inputs outside an operation's domain.
class DegenerateInputError : public NumericError {
 public:
  using NumericError::NumericError;
};

}  // namespace gcot
