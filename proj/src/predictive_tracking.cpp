#include "koopman_ddpc/predictive_tracking.hpp"

#include <chrono>

namespace kddpc {

TrackingRun run_receding_horizon(const KoopmanSystem& sys, StepController& ctrl,
                           const ReferenceTrajectory& r, const Vector& z1, int W,
                           const CostWeights& weights) {
  const int T = r.horizon();
  require(W >= 1 && W <= T, ErrorCode::kConfig,
          "prediction horizon W=" + std::to_string(W) + " outside [1, T=" + std::to_string(T) + "]");
  require(z1.size() == sys.nz(), ErrorCode::kDimension, "initial state size");
  require(r.dim() == sys.nz(), ErrorCode::kDimension, "reference dimension must equal n_z");

  TrackingRun run;
  run.system_id = sys.id();
  run.controller = ctrl.name();
  run.W = W;

  Vector z = z1;
  const Vector zero_u = Vector::Zero(sys.nu());
  for (int k = 0; k < ctrl.warmup_steps(); ++k) {
    run.warmup_states.push_back(z);
    ctrl.observe(z, zero_u);
    z = sys.step(z, zero_u);
    if (!z.allFinite()) fail(ErrorCode::kDivergence, "non-finite state during warm-up");
  }

  const auto& targets = r.targets();
  auto apply = [&](int t, const Vector& u, double ms) {
    require(u.size() == sys.nu() && u.allFinite(), ErrorCode::kControllerFailure,
            "controller returned an invalid control at step " + std::to_string(t));
    const Vector& rt = targets[static_cast<std::size_t>(t - 1)];
    const double c = weights.stage_cost(z, u, rt);
    run.states.push_back(z);
    run.controls.push_back(u);
    run.targets.push_back(rt);
    run.stage_costs.push_back(c);
    run.solve_ms.push_back(ms);
    run.total_cost += c;
    ctrl.observe(z, u);
    z = sys.step(z, u);
    if (!z.allFinite()) fail(ErrorCode::kDivergence, "non-finite state after step " + std::to_string(t));
  };

  auto solve = [&](int t, bool final_solve, double& ms) {
    WindowRequest req;
    req.t = t;
    req.T = T;
    req.z = &z;
    req.targets = std::span<const Vector>(targets).subspan(static_cast<std::size_t>(t - 1),
                                                          static_cast<std::size_t>(W));
    req.final_solve = final_solve;
    const auto start = std::chrono::steady_clock::now();
    std::vector<Vector> plan;
    try {
      plan = ctrl.plan(req);
    } catch (const Error& e) {
      fail(ErrorCode::kControllerFailure,
           "controller '" + ctrl.name() + "' failed at step " + std::to_string(t) + ": " + e.what());
    }
    ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    require(static_cast<int>(plan.size()) == W, ErrorCode::kControllerFailure,
            "controller returned a window of the wrong length at step " + std::to_string(t));
    return plan;
  };

  for (int t = 1; t <= T - W; ++t) {
    double ms = 0.0;
    const auto plan = solve(t, false, ms);
    apply(t, plan.front(), ms);
  }
  const int tf = T - W + 1;
  double ms = 0.0;
  const auto tail = solve(tf, true, ms);
  for (int k = 0; k < W; ++k) apply(tf + k, tail[static_cast<std::size_t>(k)], k == 0 ? ms : 0.0);
  run.final_state = z;
  return run;
}

LmpcClosedForm::LmpcClosedForm(KoopmanSystem sys, const CostWeights& weights, int W)
    : sys_(std::move(sys)),
      weights_(weights),
      W_(W),
      Q_(weights.lifted_Q(sys_.lifted().C)),
      riccati_((require(W >= 2, ErrorCode::kConfig,
                        "closed-form L-MPC needs W >= 2 (one backward Riccati step)"),
                RiccatiSolution(sys_.lifted().A, sys_.lifted().B, Q_, weights.R(), W))) {
  Kbar_ = riccati_.K(1);
  for (int k = 1; k <= W_ - 1; ++k) ff_.push_back(kddpc::feedforward_gain(riccati_, 1, k));
}

const Matrix& LmpcClosedForm::feedforward_gain(int k) const {
  require(k >= 1 && k <= W_ - 1, ErrorCode::kIndexRange, "Kbar_{1->k} index");
  return ff_[static_cast<std::size_t>(k - 1)];
}

std::vector<Vector> LmpcClosedForm::plan(const WindowRequest& req) {
  const auto& L = sys_.lifted();
  require(static_cast<int>(req.targets.size()) == W_, ErrorCode::kDimension, "window length");
  std::vector<Vector> refs;
  refs.reserve(req.targets.size());
  for (const auto& r : req.targets) refs.push_back(sys_.lift(r));
  const Vector x = sys_.lift(*req.z);

  std::vector<Vector> window;
  window.reserve(static_cast<std::size_t>(W_));
  // first control straight from the time-invariant gains
  Vector u = -Kbar_ * (x - refs[0]);
  for (int k = 1; k <= W_ - 1; ++k) {
    const Vector w = L.A * refs[static_cast<std::size_t>(k - 1)] - refs[static_cast<std::size_t>(k)];
    u -= ff_[static_cast<std::size_t>(k - 1)] * w;
  }
  window.push_back(u);
  // remaining controls: W-step optimal policy rolled out on the lifted model
  const OfflinePolicy policy(L, weights_, std::move(refs));
  Vector xk = L.step(x, u);
  for (int k = 2; k <= W_; ++k) {
    Vector uk = policy.control(k, xk);
    xk = L.step(xk, uk);
    window.push_back(std::move(uk));
  }
  return window;
}

LmpcQp::LmpcQp(KoopmanSystem sys, const CostWeights& weights, int W, double tol)
    : sys_(std::move(sys)), W_(W), Q_(weights.lifted_Q(sys_.lifted().C)) {
  require(W >= 1, ErrorCode::kConfig, "L-MPC QP needs W >= 1");
  const auto& L = sys_.lifted();
  const int nx = L.nx(), nu = L.nu();
  // variables: [u_1 .. u_W, x_1 .. x_W]
  const int n = W * (nu + nx);
  Matrix H = Matrix::Zero(n, n);
  for (int i = 0; i < W; ++i) {
    H.block(i * nu, i * nu, nu, nu) = 2.0 * weights.R();
    const int xo = W * nu + i * nx;
    H.block(xo, xo, nx, nx) = 2.0 * Q_;
  }
  // x_1 = psi(z_t); x_{i+1} - A x_i - B u_i = 0
  Matrix Aeq = Matrix::Zero(W * nx, n);
  Aeq.block(0, W * nu, nx, nx).setIdentity();
  for (int i = 0; i + 1 < W; ++i) {
    const int row = (i + 1) * nx;
    Aeq.block(row, W * nu + (i + 1) * nx, nx, nx).setIdentity();
    Aeq.block(row, W * nu + i * nx, nx, nx) = -L.A;
    Aeq.block(row, i * nu, nx, nu) = -L.B;
  }
  solver_ = std::make_unique<EqQpSolver>(H, Aeq, tol);
}

std::vector<Vector> LmpcQp::plan(const WindowRequest& req) {
  const auto& L = sys_.lifted();
  const int nx = L.nx(), nu = L.nu();
  require(static_cast<int>(req.targets.size()) == W_, ErrorCode::kDimension, "window length");
  Vector f = Vector::Zero(W_ * (nu + nx));
  for (int i = 0; i < W_; ++i) {
    f.segment(W_ * nu + i * nx, nx) = -2.0 * Q_ * sys_.lift(req.targets[static_cast<std::size_t>(i)]);
  }
  Vector b = Vector::Zero(W_ * nx);
  b.head(nx) = sys_.lift(*req.z);
  const SolveReport rep = solver_->solve(f, b);
  std::vector<Vector> window;
  for (int i = 0; i < W_; ++i) window.push_back(rep.x.segment(i * nu, nu));
  return window;
}

std::unique_ptr<StepController> lmpc_closed_form(const KoopmanSystem& sys,
                                                 const CostWeights& weights, int W) {
  return std::make_unique<LmpcClosedForm>(sys, weights, W);
}

std::unique_ptr<StepController> lmpc_qp(const KoopmanSystem& sys, const CostWeights& weights,
                                        int W) {
  return std::make_unique<LmpcQp>(sys, weights, W);
}

}  // namespace kddpc
