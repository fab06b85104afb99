#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace moodval {

/// Base of every error the library raises. `kind()` is a stable
/// machine-readable tag used by the CLI's JSON error output.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& message)
      : Error("validation_error", message) {}
  ValidationError(std::string kind, const std::string& message)
      : Error(std::move(kind), message) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message)
      : Error("config_error", message) {}
};

class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& message)
      : Error("parse_error", source + ":" + std::to_string(line) + ": " + message),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class NoUsableFramesError : public ValidationError {
 public:
  explicit NoUsableFramesError(const std::string& message)
      : ValidationError("no_usable_frames", message) {}
};

class InsufficientFramesError : public ValidationError {
 public:
  explicit InsufficientFramesError(const std::string& message)
      : ValidationError("insufficient_frames", message) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& message) : Error("io_error", message) {}
};

/// Raised by the trainer when a loss turns NaN/Inf.
class NonFiniteLossError : public Error {
 public:
  explicit NonFiniteLossError(const std::string& message)
      : Error("non_finite_loss", message) {}
};

}  // namespace moodval
