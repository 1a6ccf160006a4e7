#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "koopman_ddpc/errors.hpp"

namespace kddpc {

/// Linear dynamics x+ = A x + B u with output z = C x.
struct LiftedLinearSystem {
  Matrix A;
  Matrix B;
  Matrix C;

  int nx() const { return static_cast<int>(A.rows()); }
  int nu() const { return static_cast<int>(B.cols()); }
  int nz() const { return static_cast<int>(C.rows()); }

  /// Throws kDimension / kNonFinite.
  void validate() const;
  Vector step(const Vector& x, const Vector& u) const { return A * x + B * u; }
};

using DynamicsFn = std::function<Vector(const Vector& z, const Vector& u)>;
using LiftingFn = std::function<Vector(const Vector& z)>;

/// A nonlinear plant z+ = f(z, u), optionally with an exact Koopman embedding
/// (psi, A, B, C). Immutable once built.
class KoopmanSystem {
 public:
  KoopmanSystem(std::string id, int nz, int nu, DynamicsFn dynamics);
  KoopmanSystem(std::string id, int nz, int nu, DynamicsFn dynamics, LiftingFn lifting,
                LiftedLinearSystem lifted);

  const std::string& id() const { return id_; }
  int nz() const { return nz_; }
  int nu() const { return nu_; }
  /// Lifted dimension, or 0 when no embedding is attached.
  int nx() const { return lifted_ ? lifted_->nx() : 0; }

  bool has_embedding() const { return lifted_.has_value(); }
  const LiftedLinearSystem& lifted() const;

  Vector step(const Vector& z, const Vector& u) const;
  /// psi(z); kUnsupported when the plant has no embedding.
  Vector lift(const Vector& z) const;

 private:
  std::string id_;
  int nz_;
  int nu_;
  DynamicsFn dynamics_;
  LiftingFn lifting_;
  std::optional<LiftedLinearSystem> lifted_;
};

/// States z_1 .. z_{K+1} for K controls. Throws kDivergence naming the step
/// index when a non-finite state appears.
std::vector<Vector> simulate(const KoopmanSystem& sys, const Vector& z1,
                             std::span<const Vector> controls);

std::vector<Vector> simulate_lifted(const LiftedLinearSystem& lifted, const Vector& x1,
                                    std::span<const Vector> controls);

inline Vector lift(const KoopmanSystem& sys, const Vector& z) { return sys.lift(z); }

struct EmbeddingReport {
  double max_dynamics_residual = 0.0;
  double max_recovery_residual = 0.0;
  int samples = 0;
  bool pass = false;
};

/// Checks psi(f(z,u)) = A psi(z) + B u and z = C psi(z) over the samples.
EmbeddingReport verify_embedding(const KoopmanSystem& sys,
                                 std::span<const std::pair<Vector, Vector>> samples,
                                 double tol);

KoopmanSystem slow_manifold();
KoopmanSystem quartic_manifold();
/// Two-wheeled robot kinematics, state (x, y, heading), input (v, w).
KoopmanSystem unicycle(double dt = 0.025);
/// Lookup by id: "slow_manifold", "quartic_manifold", "unicycle".
KoopmanSystem make_system(std::string_view id, double dt = 0.025);

struct ReferenceNormReport {
  double max_norm = 0.0;
  int exceed_count = 0;   ///< targets with ||r_t|| > 1
  double max_lifted_norm = 0.0;  ///< max ||psi(r_t)||, 0 without an embedding
};

/// Targets r_1 .. r_T.
class ReferenceTrajectory {
 public:
  ReferenceTrajectory() = default;
  explicit ReferenceTrajectory(std::vector<Vector> targets);

  int horizon() const { return static_cast<int>(targets_.size()); }
  int dim() const { return targets_.empty() ? 0 : static_cast<int>(targets_.front().size()); }
  /// 1-based access matching the time index.
  const Vector& at(int t) const;
  const std::vector<Vector>& targets() const { return targets_; }

  ReferenceNormReport norm_report(const KoopmanSystem* sys = nullptr) const;
  std::vector<Vector> lifted(const KoopmanSystem& sys) const;
  ReferenceTrajectory slice(int first, int last) const;

 private:
  std::vector<Vector> targets_;
};

/// Sinusoid on one state coordinate: r_{c,t} = M sin(2 pi t / period).
ReferenceTrajectory sine_reference(int nz, int component, double magnitude, double period, int T);

/// Heart curve sampled at parameter s_k = 2 pi k / steps_per_cycle, k = 0..T-1.
/// Heading is the four-quadrant angle of the forward difference, unwrapped.
ReferenceTrajectory heart_reference(int cycles, int steps_per_cycle);

/// Q_z (PSD) and R (PD); Q = C^T Q_z C is derived per embedding.
class CostWeights {
 public:
  CostWeights(Matrix Qz, Matrix R);

  const Matrix& Qz() const { return Qz_; }
  const Matrix& R() const { return R_; }
  Matrix lifted_Q(const Matrix& C) const { return C.transpose() * Qz_ * C; }
  double stage_cost(const Vector& z, const Vector& u, const Vector& r) const;

 private:
  Matrix Qz_;
  Matrix R_;
};

}  // namespace kddpc
