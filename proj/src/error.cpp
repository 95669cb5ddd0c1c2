#include "polu/error.hpp"

namespace polu {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid-argument";
    case ErrorKind::ShapeMismatch: return "shape-mismatch";
    case ErrorKind::InvalidState: return "invalid-state";
    case ErrorKind::PreconditionViolated: return "precondition-violated";
    case ErrorKind::ConstructionInfeasible: return "construction-infeasible";
    case ErrorKind::ConvergenceFailure: return "convergence-failure";
    case ErrorKind::FormatError: return "format-error";
    case ErrorKind::ParseError: return "parse-error";
    case ErrorKind::NotFound: return "not-found";
    case ErrorKind::Diverged: return "diverged";
    case ErrorKind::IoError: return "io-error";
  }
  return "unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace polu
