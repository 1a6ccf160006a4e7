#pragma once

#include <vector>

#include "koopman_ddpc/errors.hpp"

namespace kddpc {

/// Finite-horizon backward Riccati recursion with time indices 1..T:
///   P_T = Q,
///   Sigma_t = R + B^T P_{t+1} B,
///   K_t = Sigma_t^{-1} B^T P_{t+1} A,
///   P_t = Q + A^T P_{t+1} A - A^T P_{t+1} B K_t,      t = T-1, ..., 1.
/// A_cl,t = A - B K_t. The solution keeps (A, B, Q, R) so gains and
/// transition products can be formed without extra arguments.
class RiccatiSolution {
 public:
  RiccatiSolution(Matrix A, Matrix B, Matrix Q, Matrix R, int horizon);

  int horizon() const { return T_; }
  const Matrix& A() const { return A_; }
  const Matrix& B() const { return B_; }
  const Matrix& Q() const { return Q_; }
  const Matrix& R() const { return R_; }

  const Matrix& P(int t) const;      ///< t in [1, T]
  const Matrix& K(int t) const;      ///< t in [1, T-1]
  const Matrix& Sigma(int t) const;  ///< t in [1, T-1]
  /// Sigma_t for t in [1, T], with the terminal weight Sigma_T = R.
  Matrix stage_weight(int t) const;
  const Matrix& closed_loop(int t) const;  ///< A - B K_t, t in [1, T-1]

  /// max_t || P_t - (Q + A^T P_{t+1} A - A^T P_{t+1} B Sigma_t^{-1} B^T P_{t+1} A) ||
  double max_recursion_residual() const;

 private:
  Matrix A_, B_, Q_, R_;
  int T_;
  std::vector<Matrix> P_, K_, Sigma_, Acl_;
};

/// Throws kIllPosed when Sigma_t loses positive definiteness.
RiccatiSolution riccati_recursion(const Matrix& A, const Matrix& B, const Matrix& Q,
                                  const Matrix& R, int T);

/// A_cl,t2 A_cl,t2-1 ... A_cl,t1+1 (identity when t1 == t2); 1 <= t1 <= t2 < T.
Matrix closed_loop_transition(const RiccatiSolution& sol, int t1, int t2);

/// K_{t->i} = Sigma_t^{-1} B^T A_cl,t->i^T P_{i+1}; 1 <= t <= i < T.
Matrix feedforward_gain(const RiccatiSolution& sol, int t, int i);

struct DareSolution {
  Matrix P;
  Matrix K;
  Matrix Sigma;
  Matrix A_cl;
  double spectral_radius = 0.0;
  double residual = 0.0;  ///< relative DARE residual
  int iterations = 0;
};

double spectral_radius(const Matrix& M);

/// Fixed-point Riccati iteration from P = Q until the relative step is below
/// tol. Throws kNoConvergence (with the last step size) otherwise.
DareSolution solve_dare(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R,
                        double tol = 1e-12, int max_iter = 100000);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  double slope_stderr = 0.0;
  int points = 0;
};

LinearFit fit_line(const std::vector<double>& xs, const std::vector<double>& ys);

struct StabilityDiagnostics {
  double rho_cl = 0.0;      ///< rho(A_cl,inf)
  double gamma_inf = 0.0;   ///< (1 + rho_cl) / 2
  double kappa_est = 1.0;   ///< strong-stability conditioning witness
  int delta_stab_est = 0;
  double rho_inf_est = 0.0;  ///< fitted Riccati convergence rate
  double rho_inf_fit_r2 = 0.0;
  double dare_residual = 0.0;
  bool kappa_from_lyapunov = false;  ///< A_cl,inf was (near) defective
};

/// Numerical realisation of the stability constants. kappa_est comes from the
/// eigenvector conditioning of A_cl,inf, or, when that matrix is close to
/// defective, from a Lyapunov certificate for A_cl,inf / gamma_inf.
StabilityDiagnostics stability_diagnostics(const Matrix& A, const Matrix& B, const Matrix& Q,
                                           const Matrix& R, int T);

}  // namespace kddpc
