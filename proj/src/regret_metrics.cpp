#include "koopman_ddpc/regret_metrics.hpp"

#include <cmath>
#include <set>

namespace kddpc {

OracleCost oracle_cost(const KoopmanSystem& sys, const CostWeights& weights,
                       const ReferenceTrajectory& r, const Vector& z1) {
  const OfflineSolution sol = optimal_controls(sys, weights, r, z1);
  return OracleCost{sys.id(), r.horizon(), z1, sol.cost};
}

double dynamic_regret(const TrackingRun& run, const OracleCost& oracle) {
  require(run.system_id == oracle.system_id, ErrorCode::kMismatch,
          "run system '" + run.system_id + "' differs from oracle system '" + oracle.system_id + "'");
  require(run.horizon() == oracle.T, ErrorCode::kMismatch,
          "run horizon " + std::to_string(run.horizon()) + " differs from oracle horizon " +
              std::to_string(oracle.T));
  require(run.horizon() > 0 && run.states.front().size() == oracle.z1.size() &&
              (run.states.front() - oracle.z1).norm() <= 1e-12 * (1.0 + oracle.z1.norm()),
          ErrorCode::kMismatch, "run and oracle start from different states");
  return run.total_cost - oracle.cost;
}

double lifted_run_cost(const TrackingRun& run, const KoopmanSystem& sys,
                       const CostWeights& weights) {
  const LiftedLinearSystem& lifted = sys.lifted();
  const Matrix Q = weights.lifted_Q(lifted.C);
  double total = 0.0;
  for (int t = 0; t < run.horizon(); ++t) {
    const auto k = static_cast<std::size_t>(t);
    total += lifted_stage_cost(Q, weights.R(), sys.lift(run.states[k]), run.controls[k],
                               sys.lift(run.targets[k]));
  }
  return total;
}

namespace {

void check_run(const TrackingRun& run, const ReferenceTrajectory& r) {
  require(run.horizon() == r.horizon(), ErrorCode::kMismatch, "run and reference horizons differ");
  require(static_cast<int>(run.controls.size()) == run.horizon(), ErrorCode::kDimension,
          "run controls incomplete");
}

double weighted_sq(const Vector& v, const Matrix& S) { return v.dot(S * v); }

}  // namespace

DeviationTerms deviation_identity(const TrackingRun& run, const KoopmanSystem& sys,
                                  const CostWeights& weights, const ReferenceTrajectory& r) {
  check_run(run, r);
  const OfflinePolicy policy(sys.lifted(), weights, r.lifted(sys));
  const RiccatiSolution& ric = policy.riccati();
  DeviationTerms out;
  for (int t = 1; t <= run.horizon(); ++t) {
    const auto k = static_cast<std::size_t>(t - 1);
    const Vector du = run.controls[k] - policy.control(t, sys.lift(run.states[k]));
    const double term = weighted_sq(du, ric.stage_weight(t));
    out.per_step.push_back(term);
    out.total += term;
  }
  return out;
}

BoundDecomposition decompose_bound(const TrackingRun& run, const KoopmanSystem& sys,
                                   const CostWeights& weights, const ReferenceTrajectory& r,
                                   int W) {
  check_run(run, r);
  const int T = r.horizon();
  require(W >= 2 && W <= T, ErrorCode::kConfig, "decomposition needs 2 <= W <= T");
  const LiftedLinearSystem& lifted = sys.lifted();
  const std::vector<Vector> refs = r.lifted(sys);
  const OfflinePolicy policy(lifted, weights, refs);
  const RiccatiSolution& ric = policy.riccati();
  const DisturbanceSequence& w = policy.disturbance();
  const Matrix Q = weights.lifted_Q(lifted.C);
  const RiccatiSolution local = riccati_recursion(lifted.A, lifted.B, Q, weights.R(), W);
  const Matrix& Kbar1 = local.K(1);
  std::vector<Matrix> Kbar;  // Kbar_{1->k}, k = 1..W-1
  for (int k = 1; k <= W - 1; ++k) Kbar.push_back(feedforward_gain(local, 1, k));

  BoundDecomposition out;
  for (int t = 1; t <= T - W; ++t) {
    const Matrix S = ric.Sigma(t);
    const Vector e = sys.lift(run.states[static_cast<std::size_t>(t - 1)]) - refs[static_cast<std::size_t>(t - 1)];
    out.feedback += weighted_sq((ric.K(t) - Kbar1) * e, S);

    Vector window = Vector::Zero(lifted.nu());
    Vector ff_diff = Vector::Zero(lifted.nu());
    for (int i = t; i <= t + W - 2; ++i) {
      const Matrix Kti = feedforward_gain(ric, t, i);
      window += Kti * w.at(i);
      ff_diff += (Kti - Kbar[static_cast<std::size_t>(i - t)]) * w.at(i);
    }
    out.feedforward += weighted_sq(ff_diff, S);
    out.truncation += weighted_sq(Vector(policy.feedforward(t) - window), S);
  }
  return out;
}

RegretReport regret_report(const TrackingRun& run, const KoopmanSystem& sys,
                           const CostWeights& weights, const ReferenceTrajectory& r,
                           const OracleCost& oracle, bool with_decomposition) {
  RegretReport rep;
  rep.J_T = run.total_cost;
  rep.J_star = oracle.cost;
  rep.regret = dynamic_regret(run, oracle);
  const DeviationTerms dev = deviation_identity(run, sys, weights, r);
  rep.identity = dev.total;
  rep.per_step_deviation = dev.per_step;
  rep.identity_gap = std::abs(rep.regret - rep.identity);
  if (with_decomposition && run.W >= 2) rep.terms = decompose_bound(run, sys, weights, r, run.W);
  return rep;
}

SweepFit fit_sweep(const std::vector<SweepRow>& rows, double floor) {
  SweepFit out;
  std::vector<double> xs, ys;
  std::set<int> distinct;
  for (const auto& row : rows) {
    require(std::isfinite(row.regret), ErrorCode::kNonFinite,
            "non-finite regret at W=" + std::to_string(row.W));
    if (row.regret <= floor) {
      out.excluded.push_back(row.W);
      continue;
    }
    xs.push_back(row.W);
    ys.push_back(std::log(row.regret));
    distinct.insert(row.W);
  }
  require(distinct.size() >= 3, ErrorCode::kConfig,
          "need >= 3 W values with positive regret for a fit, have " +
              std::to_string(distinct.size()));
  out.fit = fit_line(xs, ys);
  return out;
}

}  // namespace kddpc
