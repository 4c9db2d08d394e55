#pragma once

#include <stdexcept>
#include <string>

namespace mfus {

enum class ErrorKind {
  Parse,
  EmptyInput,
  Config,
  Shape,
  Invariant,
  Io,
  Numeric,
  Format,
};

// Every failure raised by the core carries a kind so the C boundary can map
// it to a stable status code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Parse: return "parse";
    case ErrorKind::EmptyInput: return "empty_input";
    case ErrorKind::Config: return "config";
    case ErrorKind::Shape: return "shape";
    case ErrorKind::Invariant: return "invariant";
    case ErrorKind::Io: return "io";
    case ErrorKind::Numeric: return "numeric";
    case ErrorKind::Format: return "format";
  }
  return "unknown";
}

}  // namespace mfus
