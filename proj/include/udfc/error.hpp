#pragma once

#include <stdexcept>
#include <string>

namespace udfc {

enum class ErrorKind {
  MissingFile,
  Io,
  ShapeMismatch,
  NonFinite,
  UnsupportedLayer,
  Validation,
  InvalidArgument,
  IndexOutOfRange,
  DeadChannel,
  Singular,
};

const char* to_string(ErrorKind kind) noexcept;

/// Exception carrying a machine-checkable kind next to the diagnostic text.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace udfc
