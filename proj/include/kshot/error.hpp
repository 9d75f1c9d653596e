#pragma once

#include <stdexcept>
#include <string>

namespace kshot {

/// Base of all library errors. The category decides the CLI exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid arguments, configuration or preconditions (exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values, failed fits, degenerate statistics (exit code 3).
class NumericError : public Error {
 public:
  using Error::Error;
};

/// File-system failures (exit code 4).
class IoError : public Error {
 public:
  using Error::Error;
};

enum class FormatErrc {
  bad_magic,
  truncated,
  dimension_overflow,
  unknown_kind,
  non_finite,
  malformed,
};

const char* to_string(FormatErrc code) noexcept;

/// Container decode/encode failure; also an I/O-class error for the CLI.
class FormatError : public IoError {
 public:
  FormatError(FormatErrc code, const std::string& what)
      : IoError(std::string(to_string(code)) + ": " + what), code_(code) {}

  FormatErrc code() const noexcept { return code_; }

 private:
  FormatErrc code_;
};

}  // namespace kshot
