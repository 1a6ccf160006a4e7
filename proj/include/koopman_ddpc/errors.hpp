#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace kddpc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class ErrorCode {
  kDimension,
  kNonFinite,
  kDivergence,
  kUnsupported,
  kInfeasible,
  kUnbounded,
  kIllPosed,
  kNoConvergence,
  kIndexRange,
  kTooShort,
  kControllerFailure,
  kMismatch,
  kConfig,
  kIo,
};

const char* to_string(ErrorCode code);

/// Every failure raised by the library carries a machine-readable code so the
/// C boundary can translate it without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what);
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& what);

inline void require(bool ok, ErrorCode code, const std::string& what) {
  if (!ok) fail(code, what);
}

bool all_finite(const Matrix& m);

}  // namespace kddpc
