#pragma once

#include <string>
#include <vector>

#include "koopman_ddpc/offline_oracle.hpp"
#include "koopman_ddpc/predictive_tracking.hpp"
#include "koopman_ddpc/riccati_lqt.hpp"

namespace kddpc {

/// Offline optimum J_T* with the setup it was computed for.
struct OracleCost {
  std::string system_id;
  int T = 0;
  Vector z1;
  double cost = 0.0;
};

OracleCost oracle_cost(const KoopmanSystem& sys, const CostWeights& weights,
                       const ReferenceTrajectory& r, const Vector& z1);

/// J_T(run) - J_T*. Throws kMismatch if system, horizon or initial state differ.
double dynamic_regret(const TrackingRun& run, const OracleCost& oracle);

/// Run cost recomputed in lifted coordinates, sum ||psi(z_t) - psi(r_t)||_Q^2 + ||u_t||_R^2.
double lifted_run_cost(const TrackingRun& run, const KoopmanSystem& sys, const CostWeights& weights);

struct DeviationTerms {
  std::vector<double> per_step;  ///< ||u_t - pi*_t(x_t)||^2_{Sigma_t}, t = 1..T
  double total = 0.0;
};

/// Sum over t of ||u_t - pi*_t(psi(z_t))||^2_{Sigma_t}, with pi* the offline
/// policy evaluated on the run's own states and Sigma_T = R.
DeviationTerms deviation_identity(const TrackingRun& run, const KoopmanSystem& sys,
                                  const CostWeights& weights, const ReferenceTrajectory& r);

struct BoundDecomposition {
  double truncation = 0.0;
  double feedback = 0.0;
  double feedforward = 0.0;
  double sum() const { return truncation + feedback + feedforward; }
};

/// The three deviation sums over t = 1..T-W, with Kbar taken from the
/// W-step Riccati recursion.
BoundDecomposition decompose_bound(const TrackingRun& run, const KoopmanSystem& sys,
                                   const CostWeights& weights, const ReferenceTrajectory& r, int W);

struct RegretReport {
  double J_T = 0.0;
  double J_star = 0.0;
  double regret = 0.0;
  double identity = 0.0;
  double identity_gap = 0.0;
  BoundDecomposition terms;
  std::vector<double> per_step_deviation;
};

RegretReport regret_report(const TrackingRun& run, const KoopmanSystem& sys,
                           const CostWeights& weights, const ReferenceTrajectory& r,
                           const OracleCost& oracle, bool with_decomposition);

struct SweepRow {
  int W = 0;
  double regret = 0.0;
  double log_regret = 0.0;
  BoundDecomposition terms;
  double identity_gap = 0.0;
  double runtime_ms = 0.0;
};

struct SweepFit {
  LinearFit fit;
  std::vector<int> excluded;  ///< W values dropped for regret <= 1e-14
};

/// OLS of ln(regret) on W. Needs at least 3 distinct W after exclusions.
SweepFit fit_sweep(const std::vector<SweepRow>& rows, double floor = 1e-14);

}  // namespace kddpc
