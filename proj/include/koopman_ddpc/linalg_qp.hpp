#pragma once

#include <optional>
#include <vector>

#include "koopman_ddpc/errors.hpp"

namespace kddpc {

/// min 1/2 x^T H x + f^T x  s.t.  A_eq x = b_eq.  A_eq may have zero rows.
struct EqConstrainedQP {
  Matrix H;
  Vector f;
  Matrix A_eq;
  Vector b_eq;
};

struct SolveReport {
  Vector x;
  Vector multiplier;           ///< nu with H x + f + A_eq^T nu = 0 (direct solves)
  double objective = 0.0;
  double primal_residual = 0.0;  ///< ||A_eq x - b_eq||
  double dual_residual = 0.0;    ///< stationarity (direct) or ADMM dual residual
  int iterations = 0;            ///< 0 for direct solves
  bool converged = false;
};

struct PinvResult {
  Vector x;
  int rank = 0;
};

/// Minimum-norm least-squares solution of A x = b; rank counted relative to
/// the largest singular value.
PinvResult pinv_solve(const Matrix& A, const Vector& b, double rank_tol = 1e-10);

/// Orthogonal split of R^n into range(A^T) and null(A) for a fixed A.
class EqualityProjector {
 public:
  EqualityProjector(const Matrix& A_eq, double rank_tol = 1e-10);

  int cols() const { return n_; }
  int rank() const { return rank_; }
  /// Orthonormal basis of null(A), n x (n - rank).
  const Matrix& null_basis() const { return null_; }
  /// Minimum-norm x in range(A^T) with A x = b (when consistent).
  Vector particular(const Vector& b) const;
  const Matrix& A() const { return A_; }

 private:
  Matrix A_;
  int n_ = 0;
  int rank_ = 0;
  Matrix range_;     // n x rank
  Matrix tri_;       // rank x rank lower-triangular block of R^T
  Eigen::VectorXi perm_;  // first `rank` pivoted constraint indices
  Matrix null_;
};

/// Equality-constrained QP with fixed (H, A_eq) re-solved for many (f, b_eq).
/// Non-unique minimizers resolve to the minimum-norm one.
class EqQpSolver {
 public:
  EqQpSolver(const Matrix& H, const Matrix& A_eq, double tol = 1e-9);

  /// Throws kInfeasible / kUnbounded.
  SolveReport solve(const Vector& f, const Vector& b_eq) const;
  int null_dim() const { return static_cast<int>(proj_.null_basis().cols()); }

 private:
  Matrix H_;
  EqualityProjector proj_;
  double tol_;
  Matrix eigvecs_;
  Vector eigvals_;
  double curvature_floor_ = 0.0;
};

SolveReport solve_eq_qp(const EqConstrainedQP& qp, double tol = 1e-9);

/// min 1/2 ||F x - d||^2  s.t.  A_eq x = b_eq, minimum-norm x on ties. The
/// factor form avoids squaring the conditioning of F.
class LeastSquaresEqSolver {
 public:
  LeastSquaresEqSolver(const Matrix& F, const Matrix& A_eq, double tol = 1e-9);

  SolveReport solve(const Vector& d, const Vector& b_eq) const;

 private:
  Matrix F_;
  EqualityProjector proj_;
  double tol_;
  Eigen::CompleteOrthogonalDecomposition<Matrix> reduced_;
};

struct IndexBlock {
  int begin = 0;
  int size = 0;
};

/// EqConstrainedQP + l1_weight * ||x[l1_block]||_1 + slack_weight * ||x[slack_block]||^2.
struct L1SlackQP {
  EqConstrainedQP core;
  IndexBlock l1_block;
  double l1_weight = 0.0;
  IndexBlock slack_block;
  double slack_weight = 0.0;
};

struct AdmmSettings {
  int max_iter = 5000;
  double tol = 1e-7;
  double rho = 1.0;
  bool adaptive_rho = true;
  double balance_ratio = 10.0;  ///< rescale when residual ratio exceeds this
  double rho_factor = 2.0;
};

/// ADMM with a consensus copy of the l1 block: the x-step is an equality
/// constrained QP, the copy step is soft-thresholding. converged=false is
/// returned (not thrown) when max_iter is hit.
SolveReport solve_l1_slack_qp(const L1SlackQP& qp, const AdmmSettings& settings = {});

/// min 1/2 ||F x - d||^2 + lambda ||x||_1  s.t.  A_eq x = b_eq, for a fixed
/// wide F (few rows, many columns). The x-step uses a thin SVD of F so each
/// iteration costs O(rows(F) * n).
class LassoEqSolver {
 public:
  LassoEqSolver(const Matrix& F, const Matrix& A_eq, AdmmSettings settings = {});

  struct WarmStart {
    Vector z;     ///< consensus copy
    Vector dual;  ///< scaled dual
    double rho = 0.0;
  };

  /// Not thread-safe: caches rho-dependent factors between calls.
  SolveReport solve(const Vector& d, const Vector& b_eq, double l1_weight,
                    WarmStart* warm = nullptr);

  int cols() const { return static_cast<int>(F_.cols()); }
  int rows() const { return static_cast<int>(F_.rows()); }

 private:
  void set_rho(double rho);
  Vector x_step(const Vector& d, const Vector& b_eq, const Vector& v) const;

  Matrix F_;
  Matrix A_;
  AdmmSettings settings_;
  Matrix U_;
  Vector sigma_;
  Matrix V_;
  double rho_ = -1.0;
  Matrix MinvAt_;  // (F^T F + rho I)^{-1} A^T
  Eigen::CompleteOrthogonalDecomposition<Matrix> schur_;
};

/// The LassoEqSolver problem by a primal active-set method over sign patterns.
/// Coefficients in the support are free within their sign orthant, the rest
/// are held at zero; a support step solves the equality-constrained least
/// squares on the support and stops at the first sign boundary. Restarting
/// from the previous support usually needs only a few steps. Requires a
/// positive l1 weight.
class ActiveSetLasso {
 public:
  ActiveSetLasso(const Matrix& F, const Matrix& A_eq, double tol = 1e-9, int max_iter = 0);

  struct WarmStart {
    std::vector<int> support;
    std::vector<double> signs;
  };

  /// converged=false (not thrown) when max_iter is reached; dual_residual is
  /// the largest remaining optimality gap.
  SolveReport solve(const Vector& d, const Vector& b_eq, double l1_weight,
                    WarmStart* warm = nullptr) const;

  int cols() const { return static_cast<int>(F_.cols()); }
  int rows() const { return static_cast<int>(F_.rows()); }

 private:
  Matrix F_;
  Matrix A_;
  Vector F_norms_;
  Vector A_norms_;
  double tol_;
  int max_iter_;
};

Vector soft_threshold(const Vector& v, double kappa);

}  // namespace kddpc
