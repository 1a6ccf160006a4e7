#pragma once

#include <vector>

#include "koopman_ddpc/koopman_systems.hpp"
#include "koopman_ddpc/riccati_lqt.hpp"

namespace kddpc {

/// w_t = A psi(r_t) - psi(r_{t+1}), t = 1..T-1.
struct DisturbanceSequence {
  std::vector<Vector> w;
  double bound = 0.0;  ///< max_t ||w_t||

  int size() const { return static_cast<int>(w.size()); }
  const Vector& at(int t) const { return w.at(static_cast<std::size_t>(t - 1)); }
};

DisturbanceSequence disturbances(const Matrix& A, const std::vector<Vector>& lifted_refs);
DisturbanceSequence disturbances(const KoopmanSystem& sys, const ReferenceTrajectory& r);

/// The noncausal optimal tracking policy for the lifted problem over a known
/// reference, usable at any state:
///   pi*_t(x) = -K_t (x - psi(r_t)) - sum_{i=t}^{T-1} K_{t->i} w_i,  pi*_T = 0.
/// The feedforward sum is kept as a backward running vector
///   b_t = P_{t+1} w_t + A_cl,t+1^T b_{t+1},
/// so each evaluation is O(n_x^2).
class OfflinePolicy {
 public:
  OfflinePolicy(const LiftedLinearSystem& lifted, const CostWeights& weights,
                std::vector<Vector> lifted_refs);

  int horizon() const { return static_cast<int>(refs_.size()); }
  Vector control(int t, const Vector& x) const;
  /// sum_{i=t}^{T-1} K_{t->i} w_i
  Vector feedforward(int t) const;
  const RiccatiSolution& riccati() const { return riccati_; }
  const DisturbanceSequence& disturbance() const { return w_; }
  const Vector& lifted_ref(int t) const { return refs_.at(static_cast<std::size_t>(t - 1)); }
  const Matrix& Q() const { return Q_; }
  const Matrix& R() const { return R_; }
  const LiftedLinearSystem& lifted() const { return lifted_; }

 private:
  LiftedLinearSystem lifted_;
  Matrix Q_;
  Matrix R_;
  std::vector<Vector> refs_;
  DisturbanceSequence w_;
  RiccatiSolution riccati_;
  std::vector<Vector> running_;  // b_t, index t
};

struct OfflineSolution {
  std::vector<Vector> controls;  ///< u*_1 .. u*_T
  std::vector<Vector> states;    ///< x*_1 .. x*_T
  std::vector<double> stage_costs;
  double cost = 0.0;  ///< lifted cumulative cost J_T*
  Vector x1;
};

OfflineSolution optimal_controls(const OfflinePolicy& policy, const Vector& x1);
OfflineSolution optimal_controls(const LiftedLinearSystem& lifted, const CostWeights& weights,
                                 const std::vector<Vector>& lifted_refs, const Vector& x1);
OfflineSolution optimal_controls(const KoopmanSystem& sys, const CostWeights& weights,
                                 const ReferenceTrajectory& r, const Vector& z1);

/// V*_t(x) = (x - psi(r_t))^T P_t (x - psi(r_t)) + v_t^T (x - psi(r_t)) + q_t.
class ValueFunctionCoeffs {
 public:
  ValueFunctionCoeffs(const LiftedLinearSystem& lifted, const CostWeights& weights,
                      std::vector<Vector> lifted_refs);

  int horizon() const { return static_cast<int>(refs_.size()); }
  const Matrix& P(int t) const { return riccati_.P(t); }
  const Vector& v(int t) const;
  double q(int t) const;
  double evaluate(int t, const Vector& x) const;
  /// Largest mismatch between the stored (v_t, q_t) and one backward step of
  /// the printed recursion; a self-consistency check.
  double max_recursion_residual() const;

 private:
  std::vector<Vector> refs_;
  DisturbanceSequence w_;
  RiccatiSolution riccati_;
  std::vector<Vector> v_;
  std::vector<double> q_;
};

ValueFunctionCoeffs value_coeffs(const LiftedLinearSystem& lifted, const CostWeights& weights,
                                 const std::vector<Vector>& lifted_refs);

double lifted_stage_cost(const Matrix& Q, const Matrix& R, const Vector& x, const Vector& u,
                         const Vector& lifted_ref);

}  // namespace kddpc
