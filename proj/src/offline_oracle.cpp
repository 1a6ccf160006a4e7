#include "koopman_ddpc/offline_oracle.hpp"

namespace kddpc {

DisturbanceSequence disturbances(const Matrix& A, const std::vector<Vector>& lifted_refs) {
  DisturbanceSequence d;
  if (lifted_refs.size() < 2) return d;
  d.w.reserve(lifted_refs.size() - 1);
  for (std::size_t t = 0; t + 1 < lifted_refs.size(); ++t) {
    d.w.push_back(A * lifted_refs[t] - lifted_refs[t + 1]);
    d.bound = std::max(d.bound, d.w.back().norm());
  }
  return d;
}

DisturbanceSequence disturbances(const KoopmanSystem& sys, const ReferenceTrajectory& r) {
  return disturbances(sys.lifted().A, r.lifted(sys));
}

double lifted_stage_cost(const Matrix& Q, const Matrix& R, const Vector& x, const Vector& u,
                         const Vector& lifted_ref) {
  const Vector e = x - lifted_ref;
  return e.dot(Q * e) + u.dot(R * u);
}

namespace {

void check_refs(const LiftedLinearSystem& lifted, const std::vector<Vector>& refs) {
  require(refs.size() >= 2, ErrorCode::kConfig, "offline policy needs a horizon of at least 2");
  for (const auto& r : refs) {
    require(r.size() == lifted.nx(), ErrorCode::kDimension, "lifted reference size mismatch");
  }
}

}  // namespace

OfflinePolicy::OfflinePolicy(const LiftedLinearSystem& lifted, const CostWeights& weights,
                             std::vector<Vector> lifted_refs)
    : lifted_(lifted),
      Q_(weights.lifted_Q(lifted.C)),
      R_(weights.R()),
      refs_((check_refs(lifted, lifted_refs), std::move(lifted_refs))),
      w_(disturbances(lifted.A, refs_)),
      riccati_(lifted.A, lifted.B, Q_, R_, static_cast<int>(refs_.size())) {
  const int T = horizon();
  running_.assign(static_cast<std::size_t>(T + 1), Vector::Zero(lifted.nx()));
  for (int t = T - 1; t >= 1; --t) {
    Vector b = riccati_.P(t + 1) * w_.at(t);
    if (t + 1 <= T - 1) b += riccati_.closed_loop(t + 1).transpose() * running_[t + 1];
    running_[static_cast<std::size_t>(t)] = std::move(b);
  }
}

Vector OfflinePolicy::feedforward(int t) const {
  require(t >= 1 && t <= horizon(), ErrorCode::kIndexRange, "policy time index");
  if (t == horizon()) return Vector::Zero(lifted_.nu());
  return riccati_.Sigma(t).llt().solve(lifted_.B.transpose() * running_[static_cast<std::size_t>(t)]);
}

Vector OfflinePolicy::control(int t, const Vector& x) const {
  require(t >= 1 && t <= horizon(), ErrorCode::kIndexRange, "policy time index");
  require(x.size() == lifted_.nx(), ErrorCode::kDimension, "policy state size");
  if (t == horizon()) return Vector::Zero(lifted_.nu());
  return -riccati_.K(t) * (x - lifted_ref(t)) - feedforward(t);
}

OfflineSolution optimal_controls(const OfflinePolicy& policy, const Vector& x1) {
  OfflineSolution out;
  out.x1 = x1;
  const int T = policy.horizon();
  Vector x = x1;
  for (int t = 1; t <= T; ++t) {
    Vector u = policy.control(t, x);
    const double c = lifted_stage_cost(policy.Q(), policy.R(), x, u, policy.lifted_ref(t));
    out.stage_costs.push_back(c);
    out.cost += c;
    out.states.push_back(x);
    x = policy.lifted().step(x, u);
    out.controls.push_back(std::move(u));
  }
  return out;
}

OfflineSolution optimal_controls(const LiftedLinearSystem& lifted, const CostWeights& weights,
                                 const std::vector<Vector>& lifted_refs, const Vector& x1) {
  return optimal_controls(OfflinePolicy(lifted, weights, lifted_refs), x1);
}

OfflineSolution optimal_controls(const KoopmanSystem& sys, const CostWeights& weights,
                                 const ReferenceTrajectory& r, const Vector& z1) {
  return optimal_controls(sys.lifted(), weights, r.lifted(sys), sys.lift(z1));
}

ValueFunctionCoeffs::ValueFunctionCoeffs(const LiftedLinearSystem& lifted,
                                         const CostWeights& weights,
                                         std::vector<Vector> lifted_refs)
    : refs_((check_refs(lifted, lifted_refs), std::move(lifted_refs))),
      w_(disturbances(lifted.A, refs_)),
      riccati_(lifted.A, lifted.B, weights.lifted_Q(lifted.C), weights.R(),
               static_cast<int>(refs_.size())) {
  const int T = horizon();
  const auto n = lifted.nx();
  v_.assign(static_cast<std::size_t>(T + 1), Vector::Zero(n));
  q_.assign(static_cast<std::size_t>(T + 1), 0.0);
  const Matrix& A = lifted.A;
  const Matrix& B = lifted.B;
  for (int t = T - 1; t >= 1; --t) {
    const Matrix& Pn = riccati_.P(t + 1);
    const Matrix& Sigma = riccati_.Sigma(t);
    const Vector& w = w_.at(t);
    const Vector& vn = v_[static_cast<std::size_t>(t + 1)];
    // Stacked blocks of the value recursion in (w_t, v_{t+1}).
    Matrix top(2 * n, n), side(2 * n, B.cols());
    top << Pn * A, 0.5 * A;
    side << Pn * B, 0.5 * B;
    Vector wv(2 * n);
    wv << w, vn;
    const Matrix SinvBtPA = Sigma.llt().solve(B.transpose() * Pn * A);
    v_[static_cast<std::size_t>(t)] = 2.0 * (top - side * SinvBtPA).transpose() * wv;
    Matrix mid(2 * n, 2 * n);
    mid << Pn, 0.5 * Matrix::Identity(n, n), 0.5 * Matrix::Identity(n, n), Matrix::Zero(n, n);
    const Matrix quad = mid - side * Sigma.llt().solve(side.transpose());
    q_[static_cast<std::size_t>(t)] = wv.dot(quad * wv) + q_[static_cast<std::size_t>(t + 1)];
  }
}

const Vector& ValueFunctionCoeffs::v(int t) const {
  require(t >= 1 && t <= horizon(), ErrorCode::kIndexRange, "v_t index");
  return v_[static_cast<std::size_t>(t)];
}

double ValueFunctionCoeffs::q(int t) const {
  require(t >= 1 && t <= horizon(), ErrorCode::kIndexRange, "q_t index");
  return q_[static_cast<std::size_t>(t)];
}

double ValueFunctionCoeffs::evaluate(int t, const Vector& x) const {
  const Vector e = x - refs_.at(static_cast<std::size_t>(t - 1));
  return e.dot(P(t) * e) + v(t).dot(e) + q(t);
}

double ValueFunctionCoeffs::max_recursion_residual() const {
  // v_t = 2 A_cl,t^T (P_{t+1} w_t + v_{t+1} / 2) is the same recursion in
  // closed-loop form; compare the two.
  double worst = 0.0;
  for (int t = 1; t < horizon(); ++t) {
    const Vector alt = 2.0 * riccati_.closed_loop(t).transpose() *
                       (riccati_.P(t + 1) * w_.at(t) + 0.5 * v(t + 1));
    worst = std::max(worst, (alt - v(t)).norm());
  }
  return worst;
}

ValueFunctionCoeffs value_coeffs(const LiftedLinearSystem& lifted, const CostWeights& weights,
                                 const std::vector<Vector>& lifted_refs) {
  return ValueFunctionCoeffs(lifted, weights, lifted_refs);
}

}  // namespace kddpc
