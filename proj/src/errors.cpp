#include "koopman_ddpc/errors.hpp"

namespace kddpc {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kDimension: return "dimension mismatch";
    case ErrorCode::kNonFinite: return "non-finite value";
    case ErrorCode::kDivergence: return "divergence";
    case ErrorCode::kUnsupported: return "unsupported operation";
    case ErrorCode::kInfeasible: return "infeasible";
    case ErrorCode::kUnbounded: return "unbounded";
    case ErrorCode::kIllPosed: return "ill-posed";
    case ErrorCode::kNoConvergence: return "no convergence";
    case ErrorCode::kIndexRange: return "index out of range";
    case ErrorCode::kTooShort: return "trajectory too short";
    case ErrorCode::kControllerFailure: return "controller failure";
    case ErrorCode::kMismatch: return "setup mismatch";
    case ErrorCode::kConfig: return "configuration error";
    case ErrorCode::kIo: return "i/o error";
  }
  return "unknown";
}

Error::Error(ErrorCode code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace kddpc
