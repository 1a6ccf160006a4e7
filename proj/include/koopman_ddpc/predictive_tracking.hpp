#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "koopman_ddpc/koopman_systems.hpp"
#include "koopman_ddpc/linalg_qp.hpp"
#include "koopman_ddpc/offline_oracle.hpp"

namespace kddpc {

/// What a controller sees at time t: the current state and the W targets
/// r_t .. r_{t+W-1} (r_t .. r_T at the final solve, which has the same length).
struct WindowRequest {
  int t = 1;
  int T = 1;
  const Vector* z = nullptr;
  std::span<const Vector> targets;
  bool final_solve = false;
};

/// Receding-horizon step controller. Implementations may keep history, so one
/// instance belongs to one run.
class StepController {
 public:
  virtual ~StepController() = default;
  virtual std::string name() const = 0;
  /// Returns the planned control window (targets.size() controls).
  virtual std::vector<Vector> plan(const WindowRequest& req) = 0;
  /// Called with each applied (z_t, u_t) pair, warm-up included.
  virtual void observe(const Vector& /*z*/, const Vector& /*u*/) {}
  /// Steps of zero-input pre-roll required before the first solve.
  virtual int warmup_steps() const { return 0; }
};

struct TrackingRun {
  std::string system_id;
  std::string controller;
  int W = 0;
  std::vector<Vector> states;    ///< z_1 .. z_T (z_1 is the post-warm-up state)
  std::vector<Vector> controls;  ///< u_1 .. u_T
  std::vector<Vector> targets;   ///< r_1 .. r_T
  std::vector<double> stage_costs;
  std::vector<double> solve_ms;  ///< wall time of the solve issued at t (0 for open-loop tail steps)
  double total_cost = 0.0;
  std::vector<Vector> warmup_states;  ///< pre-roll states, excluded from scoring
  Vector final_state;                 ///< z_{T+1}

  int horizon() const { return static_cast<int>(states.size()); }
};

/// Receding horizon over t = 1..T-W (first control applied), then one solve at
/// t = T-W+1 whose W controls are applied open loop.
TrackingRun run_receding_horizon(const KoopmanSystem& sys, StepController& ctrl,
                           const ReferenceTrajectory& r, const Vector& z1, int W,
                           const CostWeights& weights);

/// Lifted linear MPC in closed form: with the W-step Riccati recursion (local
/// indices 1..W), u = -Kbar_1 (x - psi(r_t)) - sum_{k=1}^{W-1} Kbar_{1->k} w_{t+k-1}.
/// The whole window is the rollout of the W-step optimal policy.
class LmpcClosedForm final : public StepController {
 public:
  LmpcClosedForm(KoopmanSystem sys, const CostWeights& weights, int W);

  std::string name() const override { return "lmpc"; }
  std::vector<Vector> plan(const WindowRequest& req) override;

  const Matrix& feedback_gain() const { return Kbar_; }
  /// Kbar_{1->k}, k in [1, W-1]
  const Matrix& feedforward_gain(int k) const;
  const RiccatiSolution& window_riccati() const { return riccati_; }

 private:
  KoopmanSystem sys_;
  CostWeights weights_;
  int W_;
  Matrix Q_;
  RiccatiSolution riccati_;
  Matrix Kbar_;
  std::vector<Matrix> ff_;
};

/// The W-horizon lifted problem as one equality-constrained QP in (u, x).
class LmpcQp final : public StepController {
 public:
  LmpcQp(KoopmanSystem sys, const CostWeights& weights, int W, double tol = 1e-9);

  std::string name() const override { return "lmpc_qp"; }
  std::vector<Vector> plan(const WindowRequest& req) override;

 private:
  KoopmanSystem sys_;
  int W_;
  Matrix Q_;
  std::unique_ptr<EqQpSolver> solver_;
};

std::unique_ptr<StepController> lmpc_closed_form(const KoopmanSystem& sys,
                                                 const CostWeights& weights, int W);
std::unique_ptr<StepController> lmpc_qp(const KoopmanSystem& sys, const CostWeights& weights,
                                        int W);

}  // namespace kddpc
