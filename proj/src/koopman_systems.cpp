#include "koopman_ddpc/koopman_systems.hpp"

#include <cmath>
#include <numbers>

namespace kddpc {

void LiftedLinearSystem::validate() const {
  require(A.rows() > 0 && A.rows() == A.cols(), ErrorCode::kDimension, "A must be square");
  require(B.rows() == A.rows() && B.cols() > 0, ErrorCode::kDimension, "B rows must match A");
  require(C.cols() == A.rows() && C.rows() > 0, ErrorCode::kDimension, "C cols must match A");
  require(A.allFinite() && B.allFinite() && C.allFinite(), ErrorCode::kNonFinite,
          "lifted matrices contain non-finite entries");
}

KoopmanSystem::KoopmanSystem(std::string id, int nz, int nu, DynamicsFn dynamics)
    : id_(std::move(id)), nz_(nz), nu_(nu), dynamics_(std::move(dynamics)) {
  require(nz > 0 && nu > 0, ErrorCode::kDimension, "state and input dimensions must be positive");
}

KoopmanSystem::KoopmanSystem(std::string id, int nz, int nu, DynamicsFn dynamics,
                             LiftingFn lifting, LiftedLinearSystem lifted)
    : KoopmanSystem(std::move(id), nz, nu, std::move(dynamics)) {
  lifted.validate();
  require(lifted.nz() == nz && lifted.nu() == nu, ErrorCode::kDimension,
          "lifted (B, C) dimensions disagree with the plant");
  lifting_ = std::move(lifting);
  lifted_ = std::move(lifted);
}

const LiftedLinearSystem& KoopmanSystem::lifted() const {
  if (!lifted_) fail(ErrorCode::kUnsupported, "system '" + id_ + "' has no Koopman embedding");
  return *lifted_;
}

Vector KoopmanSystem::step(const Vector& z, const Vector& u) const {
  require(z.size() == nz_ && u.size() == nu_, ErrorCode::kDimension,
          "step: state/input size mismatch for '" + id_ + "'");
  return dynamics_(z, u);
}

Vector KoopmanSystem::lift(const Vector& z) const {
  if (!lifted_) fail(ErrorCode::kUnsupported, "system '" + id_ + "' has no lifting function");
  require(z.size() == nz_, ErrorCode::kDimension, "lift: state size mismatch");
  return lifting_(z);
}

std::vector<Vector> simulate(const KoopmanSystem& sys, const Vector& z1,
                             std::span<const Vector> controls) {
  require(z1.size() == sys.nz(), ErrorCode::kDimension, "simulate: initial state size");
  std::vector<Vector> out;
  out.reserve(controls.size() + 1);
  out.push_back(z1);
  for (std::size_t k = 0; k < controls.size(); ++k) {
    Vector next = sys.step(out.back(), controls[k]);
    if (!next.allFinite()) {
      fail(ErrorCode::kDivergence, "non-finite state at step " + std::to_string(k + 1));
    }
    out.push_back(std::move(next));
  }
  return out;
}

std::vector<Vector> simulate_lifted(const LiftedLinearSystem& lifted, const Vector& x1,
                                    std::span<const Vector> controls) {
  require(x1.size() == lifted.nx(), ErrorCode::kDimension, "simulate_lifted: initial state size");
  std::vector<Vector> out;
  out.reserve(controls.size() + 1);
  out.push_back(x1);
  for (const auto& u : controls) out.push_back(lifted.step(out.back(), u));
  return out;
}

EmbeddingReport verify_embedding(const KoopmanSystem& sys,
                                 std::span<const std::pair<Vector, Vector>> samples,
                                 double tol) {
  const auto& L = sys.lifted();
  EmbeddingReport rep;
  for (const auto& [z, u] : samples) {
    const Vector x = sys.lift(z);
    const Vector dyn = sys.lift(sys.step(z, u)) - (L.A * x + L.B * u);
    const Vector rec = z - L.C * x;
    rep.max_dynamics_residual = std::max(rep.max_dynamics_residual, dyn.norm());
    rep.max_recovery_residual = std::max(rep.max_recovery_residual, rec.norm());
    ++rep.samples;
  }
  rep.pass = rep.max_dynamics_residual <= tol && rep.max_recovery_residual <= tol;
  return rep;
}

namespace {

Matrix recovery_matrix(int nz, int nx) {
  Matrix C = Matrix::Zero(nz, nx);
  C.leftCols(nz).setIdentity();
  return C;
}

}  // namespace

KoopmanSystem slow_manifold() {
  auto f = [](const Vector& z, const Vector& u) {
    Vector n(2);
    n << 0.99 * z(0), z(1) + z(0) * z(0) + u(0);
    return n;
  };
  auto psi = [](const Vector& z) {
    Vector x(3);
    x << z(0), z(1), z(0) * z(0);
    return x;
  };
  LiftedLinearSystem L;
  L.A = Matrix::Zero(3, 3);
  L.A(0, 0) = 0.99;
  L.A(1, 1) = 1.0;
  L.A(1, 2) = 1.0;
  L.A(2, 2) = 0.99 * 0.99;
  L.B = Matrix::Zero(3, 1);
  L.B(1, 0) = 1.0;
  L.C = recovery_matrix(2, 3);
  return KoopmanSystem("slow_manifold", 2, 1, f, psi, std::move(L));
}

KoopmanSystem quartic_manifold() {
  auto f = [](const Vector& z, const Vector& u) {
    const double a = z(0);
    Vector n(2);
    n << 0.99 * a, 0.9 * z(1) + a * a + a * a * a + a * a * a * a + u(0);
    return n;
  };
  auto psi = [](const Vector& z) {
    const double a = z(0);
    Vector x(5);
    x << a, z(1), a * a, a * a * a, a * a * a * a;
    return x;
  };
  // psi(f(z,u)) expanded in the monomial basis: each power of z1 scales by
  // 0.99^k, and z2+ collects z1^2 + z1^3 + z1^4 with unit weights.
  LiftedLinearSystem L;
  L.A = Matrix::Zero(5, 5);
  L.A(0, 0) = 0.99;
  L.A(1, 1) = 0.9;
  L.A(1, 2) = 1.0;
  L.A(1, 3) = 1.0;
  L.A(1, 4) = 1.0;
  L.A(2, 2) = std::pow(0.99, 2);
  L.A(3, 3) = std::pow(0.99, 3);
  L.A(4, 4) = std::pow(0.99, 4);
  L.B = Matrix::Zero(5, 1);
  L.B(1, 0) = 1.0;
  L.C = recovery_matrix(2, 5);
  return KoopmanSystem("quartic_manifold", 2, 1, f, psi, std::move(L));
}

KoopmanSystem unicycle(double dt) {
  require(dt > 0.0 && std::isfinite(dt), ErrorCode::kConfig, "unicycle dt must be positive");
  auto f = [dt](const Vector& z, const Vector& u) {
    Vector n(3);
    n << z(0) + dt * std::cos(z(2)) * u(0), z(1) + dt * std::sin(z(2)) * u(0), z(2) + dt * u(1);
    return n;
  };
  return KoopmanSystem("unicycle", 3, 2, f);
}

KoopmanSystem make_system(std::string_view id, double dt) {
  if (id == "slow_manifold") return slow_manifold();
  if (id == "quartic_manifold") return quartic_manifold();
  if (id == "unicycle") return unicycle(dt);
  fail(ErrorCode::kConfig, "unknown system id '" + std::string(id) + "'");
}

ReferenceTrajectory::ReferenceTrajectory(std::vector<Vector> targets) : targets_(std::move(targets)) {
  require(!targets_.empty(), ErrorCode::kDimension, "reference must have at least one target");
  const auto n = targets_.front().size();
  for (std::size_t t = 0; t < targets_.size(); ++t) {
    require(targets_[t].size() == n, ErrorCode::kDimension, "reference targets differ in size");
    require(targets_[t].allFinite(), ErrorCode::kNonFinite,
            "reference target " + std::to_string(t + 1) + " is not finite");
  }
}

const Vector& ReferenceTrajectory::at(int t) const {
  require(t >= 1 && t <= horizon(), ErrorCode::kIndexRange,
          "reference index " + std::to_string(t) + " outside [1, " + std::to_string(horizon()) + "]");
  return targets_[static_cast<std::size_t>(t - 1)];
}

ReferenceNormReport ReferenceTrajectory::norm_report(const KoopmanSystem* sys) const {
  ReferenceNormReport rep;
  for (const auto& r : targets_) {
    const double n = r.norm();
    rep.max_norm = std::max(rep.max_norm, n);
    if (n > 1.0) ++rep.exceed_count;
    if (sys != nullptr && sys->has_embedding()) {
      rep.max_lifted_norm = std::max(rep.max_lifted_norm, sys->lift(r).norm());
    }
  }
  return rep;
}

std::vector<Vector> ReferenceTrajectory::lifted(const KoopmanSystem& sys) const {
  std::vector<Vector> out;
  out.reserve(targets_.size());
  for (const auto& r : targets_) out.push_back(sys.lift(r));
  return out;
}

ReferenceTrajectory ReferenceTrajectory::slice(int first, int last) const {
  require(first >= 1 && first <= last && last <= horizon(), ErrorCode::kIndexRange,
          "reference slice out of range");
  return ReferenceTrajectory(
      std::vector<Vector>(targets_.begin() + (first - 1), targets_.begin() + last));
}

ReferenceTrajectory sine_reference(int nz, int component, double magnitude, double period, int T) {
  require(component >= 0 && component < nz, ErrorCode::kConfig, "sine component out of range");
  require(T >= 1 && period > 0.0, ErrorCode::kConfig, "sine reference needs T >= 1, period > 0");
  std::vector<Vector> r;
  r.reserve(static_cast<std::size_t>(T));
  for (int t = 1; t <= T; ++t) {
    Vector v = Vector::Zero(nz);
    v(component) = magnitude * std::sin(2.0 * std::numbers::pi * t / period);
    r.push_back(std::move(v));
  }
  return ReferenceTrajectory(std::move(r));
}

ReferenceTrajectory heart_reference(int cycles, int steps_per_cycle) {
  require(cycles >= 1 && steps_per_cycle >= 4, ErrorCode::kConfig,
          "heart reference needs cycles >= 1 and steps_per_cycle >= 4");
  const int T = cycles * steps_per_cycle;
  auto point = [&](int k) {
    const double s = 2.0 * std::numbers::pi * k / steps_per_cycle;
    const double sx = std::sin(s - 6.0);
    return std::pair{16.0 * sx * sx * sx, 13.0 * std::cos(s) - 5.0 * std::cos(2.0 * s - 12.0) -
                                              2.0 * std::cos(3.0 * s - 18.0) -
                                              std::cos(4.0 * s - 24.0)};
  };
  std::vector<Vector> r;
  r.reserve(static_cast<std::size_t>(T));
  double prev_heading = 0.0;
  for (int k = 0; k < T; ++k) {
    const auto [x, y] = point(k);
    const auto [xn, yn] = point(k + 1);
    double heading = std::atan2(yn - y, xn - x);
    if (k > 0) {
      // unwrap onto the branch closest to the previous heading
      heading += 2.0 * std::numbers::pi * std::round((prev_heading - heading) / (2.0 * std::numbers::pi));
    }
    prev_heading = heading;
    Vector v(3);
    v << x, y, heading;
    r.push_back(std::move(v));
  }
  return ReferenceTrajectory(std::move(r));
}

CostWeights::CostWeights(Matrix Qz, Matrix R) : Qz_(std::move(Qz)), R_(std::move(R)) {
  require(Qz_.rows() == Qz_.cols() && Qz_.rows() > 0, ErrorCode::kDimension, "Q_z must be square");
  require(R_.rows() == R_.cols() && R_.rows() > 0, ErrorCode::kDimension, "R must be square");
  require(Qz_.allFinite() && R_.allFinite(), ErrorCode::kNonFinite, "weights must be finite");
  constexpr double kTol = 1e-12;
  require((Qz_ - Qz_.transpose()).norm() <= kTol * (1.0 + Qz_.norm()), ErrorCode::kConfig,
          "Q_z must be symmetric");
  require((R_ - R_.transpose()).norm() <= kTol * (1.0 + R_.norm()), ErrorCode::kConfig,
          "R must be symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> eq(Qz_, Eigen::EigenvaluesOnly);
  require(eq.eigenvalues().minCoeff() >= -1e-12 * (1.0 + Qz_.norm()), ErrorCode::kConfig,
          "Q_z must be positive semidefinite");
  Eigen::SelfAdjointEigenSolver<Matrix> er(R_, Eigen::EigenvaluesOnly);
  require(er.eigenvalues().minCoeff() > 1e-12 * (1.0 + R_.norm()), ErrorCode::kConfig,
          "R must be positive definite");
}

double CostWeights::stage_cost(const Vector& z, const Vector& u, const Vector& r) const {
  const Vector e = z - r;
  return e.dot(Qz_ * e) + u.dot(R_ * u);
}

}  // namespace kddpc
