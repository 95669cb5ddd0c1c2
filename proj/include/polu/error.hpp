#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace polu {

enum class ErrorKind {
  InvalidArgument,
  ShapeMismatch,
  InvalidState,
  PreconditionViolated,
  ConstructionInfeasible,
  ConvergenceFailure,
  FormatError,
  ParseError,
  NotFound,
  Diverged,
  IoError,
};

std::string_view to_string(ErrorKind kind);

/// Library-wide exception. `kind()` lets callers (the CLI in particular)
/// map failures onto exit codes without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

}  // namespace polu
