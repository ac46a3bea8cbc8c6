#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace bnhp {

enum class ErrorKind {
  EmptySequence,
  NonIncreasing,
  TooShort,
  ParseError,
  SchemaError,
  InvalidParam,
  NonStationary,
  UnsupportedPrimitive,
  NonFinite,
  ShapeMismatch,
  NoBracket,
  MaxIter,
  Diverged,
  NotConverged,
  DegenerateDesign,
  EmptyData,
  LengthMismatch,
  MissingLevel,
  ZeroVariance,
  VersionMismatch,
  Io,
  Usage,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Single exception type for the library; `kind()` drives CLI exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind), message_(message) {}

  ErrorKind kind() const noexcept { return kind_; }
  /// Message without the kind prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorKind kind_;
  std::string message_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

}  // namespace bnhp
