#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace forge {

// Base of every error the engine raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad input data: malformed records, schema or invariant violations.
class DataError : public Error {
 public:
  explicit DataError(const std::string& what, std::size_t line = 0)
      : Error(line ? what + " (line " + std::to_string(line) + ")" : what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// A caller-supplied argument violates a precondition.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// A verb was invoked on a backend that does not advertise it.
class CapabilityError : public Error {
 public:
  using Error::Error;
};

// Text that the active vocabulary cannot represent.
class TokenizeError : public Error {
 public:
  using Error::Error;
};

// Failure talking to a model backend.
class BackendError : public Error {
 public:
  BackendError(const std::string& what, bool retryable)
      : Error(what), retryable_(retryable) {}
  bool retryable() const noexcept { return retryable_; }

 private:
  bool retryable_;
};

// Wire-level protocol violation (malformed body, missing field).
class ProtocolError : public Error {
 public:
  using Error::Error;
};

// Invalid pipeline configuration. `field` names the offending leaf.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& field, const std::string& what)
      : Error(field + ": " + what), field_(field) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace forge
