#include "koopman_ddpc/linalg_qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace kddpc {

PinvResult pinv_solve(const Matrix& A, const Vector& b, double rank_tol) {
  require(A.rows() == b.size(), ErrorCode::kDimension, "pinv_solve: rows(A) != size(b)");
  PinvResult out;
  out.x = Vector::Zero(A.cols());
  if (A.size() == 0 || A.cwiseAbs().maxCoeff() == 0.0) return out;
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(A.rows(), A.cols());
  cod.setThreshold(rank_tol);
  cod.compute(A);
  out.rank = static_cast<int>(cod.rank());
  out.x = cod.solve(b);
  return out;
}

EqualityProjector::EqualityProjector(const Matrix& A_eq, double rank_tol)
    : A_(A_eq), n_(static_cast<int>(A_eq.cols())) {
  if (A_.size() == 0 || A_.cwiseAbs().maxCoeff() == 0.0) {
    rank_ = 0;
    range_ = Matrix::Zero(n_, 0);
    null_ = Matrix::Identity(n_, n_);
    return;
  }
  Eigen::ColPivHouseholderQR<Matrix> qr(A_.cols(), A_.rows());
  qr.setThreshold(rank_tol);
  qr.compute(A_.transpose());
  rank_ = static_cast<int>(qr.rank());
  const Matrix Q = qr.householderQ();
  range_ = Q.leftCols(rank_);
  null_ = Q.rightCols(n_ - rank_);
  tri_ = qr.matrixR().topLeftCorner(rank_, rank_).transpose();
  perm_ = qr.colsPermutation().indices().head(rank_);
}

Vector EqualityProjector::particular(const Vector& b) const {
  require(b.size() == A_.rows(), ErrorCode::kDimension, "constraint rhs size mismatch");
  if (rank_ == 0) return Vector::Zero(n_);
  Vector bp(rank_);
  for (int i = 0; i < rank_; ++i) bp(i) = b(perm_(i));
  const Vector y = tri_.triangularView<Eigen::Lower>().solve(bp);
  return range_ * y;
}

namespace {

double feasibility_scale(const Vector& b) { return 1.0 + (b.size() ? b.norm() : 0.0); }

void check_feasible(const Matrix& A, const Vector& x, const Vector& b, double tol) {
  if (A.rows() == 0) return;
  const double res = (A * x - b).norm();
  if (res > tol * feasibility_scale(b)) {
    // report the true least-squares residual, not the basic solution's
    const auto ls = pinv_solve(A, b);
    fail(ErrorCode::kInfeasible, "equality constraints inconsistent, least-squares residual " +
                                     std::to_string((A * ls.x - b).norm()));
  }
}

// Multiplier nu with A^T nu = g, using the pivoted QR of A^T. Exact when g lies
// in range(A^T); otherwise the stationarity residual shows the mismatch.
Vector multiplier_from_gradient(const Matrix& A, const Vector& g) {
  if (A.rows() == 0) return Vector::Zero(0);
  return pinv_solve(A.transpose(), g).x;
}

}  // namespace

EqQpSolver::EqQpSolver(const Matrix& H, const Matrix& A_eq, double tol)
    : H_(H), proj_(A_eq), tol_(tol) {
  require(H.rows() == H.cols(), ErrorCode::kDimension, "H must be square");
  require(A_eq.cols() == H.cols(), ErrorCode::kDimension, "A_eq columns must match H");
  require((H - H.transpose()).norm() <= 1e-9 * (1.0 + H.norm()), ErrorCode::kIllPosed,
          "H must be symmetric");
  const Matrix& N = proj_.null_basis();
  if (N.cols() == 0) return;
  Matrix Hr = N.transpose() * H_ * N;
  Hr = 0.5 * (Hr + Hr.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(Hr);
  eigvals_ = es.eigenvalues();
  eigvecs_ = es.eigenvectors();
  const double scale = std::max(1.0, eigvals_.cwiseAbs().maxCoeff());
  curvature_floor_ = 1e-10 * scale;
}

SolveReport EqQpSolver::solve(const Vector& f, const Vector& b_eq) const {
  require(f.size() == H_.rows(), ErrorCode::kDimension, "linear term size mismatch");
  const Matrix& A = proj_.A();
  Vector x = proj_.particular(b_eq);
  check_feasible(A, x, b_eq, tol_);

  const Matrix& N = proj_.null_basis();
  if (N.cols() > 0) {
    const double scale = std::max(1.0, eigvals_.cwiseAbs().maxCoeff());
    if (eigvals_.minCoeff() < -tol_ * scale) {
      fail(ErrorCode::kUnbounded, "negative curvature " + std::to_string(eigvals_.minCoeff()) +
                                      " on the feasible subspace");
    }
    const Vector fr = N.transpose() * (H_ * x + f);
    const Vector c = eigvecs_.transpose() * fr;
    const double grad_floor = 1e-8 * (1.0 + fr.norm());
    Vector y = Vector::Zero(c.size());
    for (Eigen::Index i = 0; i < c.size(); ++i) {
      if (eigvals_(i) > curvature_floor_) {
        y(i) = -c(i) / eigvals_(i);
      } else if (std::abs(c(i)) > grad_floor) {
        fail(ErrorCode::kUnbounded, "objective decreases linearly along a zero-curvature direction");
      }
    }
    x += N * (eigvecs_ * y);
  }

  SolveReport rep;
  const Vector grad = H_ * x + f;
  rep.multiplier = multiplier_from_gradient(A, -grad);
  rep.dual_residual =
      (grad + (A.rows() ? Vector(A.transpose() * rep.multiplier) : Vector::Zero(x.size()))).norm();
  rep.primal_residual = A.rows() ? (A * x - b_eq).norm() : 0.0;
  rep.objective = 0.5 * x.dot(H_ * x) + f.dot(x);
  rep.converged = rep.primal_residual <= tol_ * feasibility_scale(b_eq);
  rep.x = std::move(x);
  return rep;
}

SolveReport solve_eq_qp(const EqConstrainedQP& qp, double tol) {
  require(qp.f.size() == qp.H.rows(), ErrorCode::kDimension, "f size mismatch");
  require(qp.b_eq.size() == qp.A_eq.rows(), ErrorCode::kDimension, "b_eq size mismatch");
  Matrix A = qp.A_eq;
  if (A.cols() != qp.H.cols() && A.rows() == 0) A.resize(0, qp.H.cols());
  return EqQpSolver(qp.H, A, tol).solve(qp.f, qp.b_eq);
}

LeastSquaresEqSolver::LeastSquaresEqSolver(const Matrix& F, const Matrix& A_eq, double tol)
    : F_(F), proj_(A_eq), tol_(tol) {
  require(A_eq.cols() == F.cols(), ErrorCode::kDimension, "A_eq columns must match F");
  const Matrix FN = F_ * proj_.null_basis();
  reduced_ = Eigen::CompleteOrthogonalDecomposition<Matrix>(FN.rows(), FN.cols());
  reduced_.setThreshold(1e-10);
  if (FN.size() > 0) reduced_.compute(FN);
}

SolveReport LeastSquaresEqSolver::solve(const Vector& d, const Vector& b_eq) const {
  require(d.size() == F_.rows(), ErrorCode::kDimension, "target size mismatch");
  const Matrix& A = proj_.A();
  Vector x = proj_.particular(b_eq);
  check_feasible(A, x, b_eq, tol_);
  const Matrix& N = proj_.null_basis();
  if (N.cols() > 0 && F_.rows() > 0) {
    const Vector y = reduced_.solve(Vector(d - F_ * x));
    x += N * y;
  }
  SolveReport rep;
  const Vector resid = F_ * x - d;
  const Vector grad = F_.transpose() * resid;
  rep.multiplier = multiplier_from_gradient(A, -grad);
  rep.dual_residual =
      (grad + (A.rows() ? Vector(A.transpose() * rep.multiplier) : Vector::Zero(x.size()))).norm();
  rep.primal_residual = A.rows() ? (A * x - b_eq).norm() : 0.0;
  rep.objective = 0.5 * resid.squaredNorm();
  rep.converged = rep.primal_residual <= tol_ * feasibility_scale(b_eq);
  rep.x = std::move(x);
  return rep;
}

Vector soft_threshold(const Vector& v, double kappa) {
  return v.unaryExpr([kappa](double a) {
    if (a > kappa) return a - kappa;
    if (a < -kappa) return a + kappa;
    return 0.0;
  });
}

namespace {

struct AdmmTolerances {
  double primal;
  double dual;
};

AdmmTolerances admm_tolerances(double tol, Eigen::Index p, double ex_norm, double z_norm,
                               double dual_norm) {
  const double sp = std::sqrt(static_cast<double>(std::max<Eigen::Index>(p, 1)));
  return {tol * sp + tol * std::max(ex_norm, z_norm), tol * sp + tol * dual_norm};
}

void check_block(const IndexBlock& blk, Eigen::Index n, const char* name) {
  require(blk.begin >= 0 && blk.size >= 0 && blk.begin + blk.size <= n, ErrorCode::kDimension,
          std::string(name) + " block outside the variable range");
}

}  // namespace

SolveReport solve_l1_slack_qp(const L1SlackQP& qp, const AdmmSettings& settings) {
  const Eigen::Index n = qp.core.H.rows();
  require(qp.l1_weight >= 0.0 && qp.slack_weight >= 0.0, ErrorCode::kConfig,
          "l1 and slack weights must be nonnegative");
  check_block(qp.l1_block, n, "l1");
  check_block(qp.slack_block, n, "slack");
  const auto& g = qp.l1_block;
  const auto& s = qp.slack_block;
  require(g.size == 0 || s.size == 0 || g.begin + g.size <= s.begin || s.begin + s.size <= g.begin,
          ErrorCode::kConfig, "l1 and slack blocks overlap");

  Matrix A = qp.core.A_eq;
  if (A.rows() == 0) A.resize(0, n);
  Matrix H = qp.core.H;
  if (s.size > 0) H.diagonal().segment(s.begin, s.size).array() += 2.0 * qp.slack_weight;
  const Vector& f = qp.core.f;

  auto objective = [&](const Vector& x) {
    double obj = 0.5 * x.dot(qp.core.H * x) + f.dot(x);
    if (g.size > 0) obj += qp.l1_weight * x.segment(g.begin, g.size).lpNorm<1>();
    if (s.size > 0) obj += qp.slack_weight * x.segment(s.begin, s.size).squaredNorm();
    return obj;
  };

  auto finish = [&](SolveReport rep, int iters, bool converged, double dual_res) {
    rep.objective = objective(rep.x);
    rep.iterations = iters;
    rep.converged = converged;
    rep.dual_residual = dual_res;
    return rep;
  };

  if (g.size == 0 || qp.l1_weight == 0.0) {
    SolveReport rep = EqQpSolver(H, A, 1e-9).solve(f, qp.core.b_eq);
    return finish(std::move(rep), 1, rep.converged, rep.dual_residual);
  }

  double rho = settings.rho;
  auto make_solver = [&](double r) {
    Matrix Hr = H;
    Hr.diagonal().segment(g.begin, g.size).array() += r;
    return EqQpSolver(Hr, A, 1e-9);
  };
  auto solver = make_solver(rho);

  Vector z = Vector::Zero(g.size);
  Vector u = Vector::Zero(g.size);  // scaled dual
  SolveReport last;
  double r_dual = 0.0;
  for (int k = 1; k <= settings.max_iter; ++k) {
    Vector fx = f;
    fx.segment(g.begin, g.size) -= rho * (z - u);
    last = solver.solve(fx, qp.core.b_eq);
    const Vector ex = last.x.segment(g.begin, g.size);
    const Vector z_prev = z;
    z = soft_threshold(ex + u, qp.l1_weight / rho);
    u += ex - z;
    const double r_pri = (ex - z).norm();
    r_dual = rho * (z - z_prev).norm();
    const auto eps = admm_tolerances(settings.tol, g.size, ex.norm(), z.norm(), rho * u.norm());
    if (r_pri <= eps.primal && r_dual <= eps.dual) return finish(std::move(last), k, true, r_dual);
    if (settings.adaptive_rho && k % 10 == 0) {
      double scale = 1.0;
      if (r_pri > settings.balance_ratio * r_dual) scale = settings.rho_factor;
      else if (r_dual > settings.balance_ratio * r_pri) scale = 1.0 / settings.rho_factor;
      if (scale != 1.0) {
        rho *= scale;
        u /= scale;
        solver = make_solver(rho);
      }
    }
  }
  return finish(std::move(last), settings.max_iter, false, r_dual);
}

LassoEqSolver::LassoEqSolver(const Matrix& F, const Matrix& A_eq, AdmmSettings settings)
    : F_(F), A_(A_eq), settings_(settings) {
  require(A_.cols() == F_.cols() || A_.rows() == 0, ErrorCode::kDimension,
          "A_eq columns must match F");
  if (A_.rows() == 0) A_.resize(0, F_.cols());
  Eigen::BDCSVD<Matrix> svd(F_, Eigen::ComputeThinU | Eigen::ComputeThinV);
  U_ = svd.matrixU();
  sigma_ = svd.singularValues();
  V_ = svd.matrixV();
  set_rho(settings_.rho);
}

void LassoEqSolver::set_rho(double rho) {
  if (rho == rho_) return;
  rho_ = rho;
  if (A_.rows() == 0) return;
  const Matrix At = A_.transpose();
  const Matrix VtA = V_.transpose() * At;
  const Vector inv = (sigma_.array().square() + rho).inverse().matrix();
  MinvAt_ = (At - V_ * VtA) / rho + V_ * (inv.asDiagonal() * VtA);
  schur_.compute(A_ * MinvAt_);
}

Vector LassoEqSolver::x_step(const Vector& d, const Vector& b_eq, const Vector& v) const {
  // unconstrained minimizer of 1/2||F x - d||^2 + rho/2 ||x - v||^2, in
  // residual form so stiff directions do not cancel
  const Vector gain = (sigma_.array() / (sigma_.array().square() + rho_)).matrix();
  Vector x = v + V_ * (gain.asDiagonal() * (U_.transpose() * (d - F_ * v)));
  if (A_.rows() > 0) {
    const Vector nu = schur_.solve(Vector(A_ * x - b_eq));
    x -= MinvAt_ * nu;
  }
  return x;
}

SolveReport LassoEqSolver::solve(const Vector& d, const Vector& b_eq, double l1_weight,
                                 WarmStart* warm) {
  const Eigen::Index n = F_.cols();
  require(d.size() == F_.rows() && b_eq.size() == A_.rows(), ErrorCode::kDimension,
          "lasso data size mismatch");
  require(l1_weight >= 0.0, ErrorCode::kConfig, "l1 weight must be nonnegative");

  double rho = settings_.rho;
  Vector z = Vector::Zero(n);
  Vector u = Vector::Zero(n);
  if (warm != nullptr && warm->z.size() == n && warm->dual.size() == n && warm->rho > 0.0) {
    z = warm->z;
    u = warm->dual;
    rho = warm->rho;
  }
  set_rho(rho);

  SolveReport rep;
  Vector x;
  double r_dual = 0.0;
  bool converged = false;
  int k = 1;
  for (; k <= settings_.max_iter; ++k) {
    x = x_step(d, b_eq, z - u);
    const Vector z_prev = z;
    z = soft_threshold(x + u, l1_weight / rho);
    u += x - z;
    const double r_pri = (x - z).norm();
    r_dual = rho * (z - z_prev).norm();
    const auto eps = admm_tolerances(settings_.tol, n, x.norm(), z.norm(), rho * u.norm());
    if (r_pri <= eps.primal && r_dual <= eps.dual) {
      converged = true;
      break;
    }
    if (settings_.adaptive_rho && k % 10 == 0) {
      double scale = 1.0;
      if (r_pri > settings_.balance_ratio * r_dual) scale = settings_.rho_factor;
      else if (r_dual > settings_.balance_ratio * r_pri) scale = 1.0 / settings_.rho_factor;
      if (scale != 1.0) {
        rho *= scale;
        u /= scale;
        set_rho(rho);
      }
    }
  }
  if (warm != nullptr) *warm = WarmStart{z, u, rho};
  rep.iterations = std::min(k, settings_.max_iter);
  rep.converged = converged;
  rep.dual_residual = r_dual;
  rep.primal_residual = A_.rows() ? (A_ * x - b_eq).norm() : 0.0;
  rep.objective = 0.5 * (F_ * x - d).squaredNorm() + l1_weight * x.lpNorm<1>();
  rep.x = std::move(x);
  return rep;
}

}  // namespace kddpc

namespace kddpc {

namespace {

struct SupportSolve {
  bool singular = false;
  Vector x;    // minimizer on the support (nonsingular case)
  Vector dir;  // zero-curvature feasible direction (singular case)
  Vector nu;
};

Matrix gather_cols(const Matrix& M, const std::vector<int>& idx) {
  Matrix out(M.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = M.col(idx[k]);
  return out;
}

// min 1/2||FS x - d||^2 + lambda theta^T x  s.t.  AS x = b, through a null-space
// basis of AS and a pivoted QR of FS N.
SupportSolve solve_on_support(const Matrix& FS, const Matrix& AS, const Vector& d, const Vector& b,
                              const Vector& theta, double lambda) {
  constexpr double kRankTol = 1e-12;
  SupportSolve out;
  const EqualityProjector proj(AS, kRankTol);
  const Vector xp = proj.particular(b);
  const Matrix& N = proj.null_basis();
  out.x = xp;
  if (N.cols() > 0) {
    const Matrix G = FS * N;
    Eigen::ColPivHouseholderQR<Matrix> qr(G.rows(), G.cols());
    qr.setThreshold(kRankTol);
    qr.compute(G);
    const auto m = G.cols();
    const auto r = qr.rank();
    const auto& P = qr.colsPermutation();
    if (r < m) {
      Vector yp = Vector::Zero(m);
      yp(r) = 1.0;
      if (r > 0) {
        const Matrix R = qr.matrixR().topLeftCorner(r, r);
        yp.head(r) = -R.triangularView<Eigen::Upper>().solve(Vector(qr.matrixR().block(0, r, r, 1)));
      }
      out.singular = true;
      out.dir = N * (P * yp);
      return out;
    }
    const Matrix R = qr.matrixR().topLeftCorner(m, m);
    const Vector qe = (qr.householderQ().transpose() * (d - FS * xp)).head(m);
    const Vector t = P.transpose() * Vector(N.transpose() * theta);
    const Vector z = R.transpose().triangularView<Eigen::Lower>().solve(t);
    const Vector yp = R.triangularView<Eigen::Upper>().solve(Vector(qe - lambda * z));
    out.x += N * (P * yp);
  }
  const Vector grad = FS.transpose() * (FS * out.x - d) + lambda * theta;
  out.nu = AS.rows() ? pinv_solve(AS.transpose(), Vector(-grad), kRankTol).x : Vector::Zero(0);
  return out;
}

double sgn(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

ActiveSetLasso::ActiveSetLasso(const Matrix& F, const Matrix& A_eq, double tol, int max_iter)
    : F_(F), A_(A_eq), tol_(tol), max_iter_(max_iter) {
  if (A_.rows() == 0) A_.resize(0, F_.cols());
  require(A_.cols() == F_.cols(), ErrorCode::kDimension, "A_eq columns must match F");
  require(all_finite(F_) && all_finite(A_), ErrorCode::kNonFinite, "lasso data must be finite");
  F_norms_ = F_.colwise().norm().transpose();
  A_norms_ = A_.rows() ? Vector(A_.colwise().norm().transpose()) : Vector::Zero(F_.cols());
  if (max_iter_ <= 0) max_iter_ = 20 * static_cast<int>(F_.cols()) + 100;
}

SolveReport ActiveSetLasso::solve(const Vector& d, const Vector& b_eq, double l1_weight,
                                  WarmStart* warm) const {
  require(d.size() == F_.rows() && b_eq.size() == A_.rows(), ErrorCode::kDimension,
          "lasso data size mismatch");
  require(l1_weight > 0.0, ErrorCode::kConfig, "active-set lasso needs a positive l1 weight");
  const double lambda = l1_weight;
  const double feas_tol = 1e-8 * (1.0 + b_eq.norm());
  const Eigen::Index n = F_.cols();

  // Free set S with sign pattern theta: theta_i x_i >= 0 for i in S, x_j = 0 off S.
  // Equivalent to a primal active-set method on the split g = p - q, p, q >= 0.
  std::vector<int> S;
  Vector x, theta;
  auto feasible = [&](const std::vector<int>& idx, const Vector& v) {
    return A_.rows() == 0 || (gather_cols(A_, idx) * v - b_eq).norm() <= feas_tol;
  };
  auto adopt_signs = [&](const Vector& prev) {
    theta = prev;
    for (Eigen::Index k = 0; k < x.size(); ++k)
      if (x(k) != 0.0) theta(k) = sgn(x(k));
  };

  if (warm != nullptr && !warm->support.empty() && warm->support.size() == warm->signs.size()) {
    S = warm->support;
    const Vector prev =
        Eigen::Map<const Vector>(warm->signs.data(), static_cast<Eigen::Index>(warm->signs.size()));
    const Matrix AS = gather_cols(A_, S);
    const bool full_row_rank =
        A_.rows() == 0 || Eigen::ColPivHouseholderQR<Matrix>(AS).rank() == A_.rows();
    const SupportSolve sub = full_row_rank
                                 ? solve_on_support(gather_cols(F_, S), AS, d, b_eq, prev, lambda)
                                 : SupportSolve{true, {}, {}, {}};
    if (!sub.singular && feasible(S, sub.x)) {
      x = sub.x;
      adopt_signs(prev);
    } else {
      S.clear();
    }
  }
  if (S.empty()) {
    if (A_.rows() > 0) {
      Eigen::ColPivHouseholderQR<Matrix> qr(A_);
      const auto rank = qr.rank();
      for (Eigen::Index k = 0; k < rank; ++k) S.push_back(qr.colsPermutation().indices()(k));
      x = pinv_solve(gather_cols(A_, S), b_eq).x;
      require(feasible(S, x), ErrorCode::kInfeasible,
              "equality constraints of the lasso are inconsistent");
      adopt_signs(Vector::Ones(x.size()));
    } else {
      x.resize(0);
      theta.resize(0);
    }
  }

  auto remove_at = [&](Eigen::Index k) {
    S.erase(S.begin() + k);
    const Eigen::Index m = x.size() - 1;
    Vector x2(m), t2(m);
    x2 << x.head(k), x.tail(m - k);
    t2 << theta.head(k), theta.tail(m - k);
    x = std::move(x2);
    theta = std::move(t2);
  };
  // Longest step t <= t_max along dir keeping theta_i x_i >= 0; index of the
  // blocking coordinate or -1.
  auto blocking = [&](const Vector& dir, double t_max, double& t) {
    t = t_max;
    Eigen::Index hit = -1;
    for (Eigen::Index k = 0; k < dir.size(); ++k) {
      if (theta(k) * dir(k) < 0.0) {
        const double step = std::max(0.0, -x(k) / dir(k));
        if (step < t || (hit < 0 && step == t && std::isinf(t_max))) {
          t = step;
          hit = k;
        }
      }
    }
    return hit;
  };

  SolveReport rep;
  Vector nu = Vector::Zero(A_.rows());
  double gap = std::numeric_limits<double>::infinity();
  int it = 0;
  bool at_minimizer = false;
  // Coordinates whose entry was blocked at once: their violation is below what
  // the support solve can resolve, so they are not offered again until progress.
  std::vector<char> stuck(static_cast<std::size_t>(n), 0);
  int just_added = -1;
  while (it < max_iter_) {
    ++it;
    const Matrix FS = gather_cols(F_, S);
    if (!at_minimizer) {
      const Matrix AS = gather_cols(A_, S);
      const SupportSolve sub = solve_on_support(FS, AS, d, b_eq, theta, lambda);
      if (sub.singular) {
        Vector dir = sub.dir;
        if (theta.dot(dir) > 0.0) dir = -dir;
        double t = 0.0;
        const Eigen::Index hit = blocking(dir, std::numeric_limits<double>::infinity(), t);
        require(hit >= 0, ErrorCode::kNoConvergence, "active-set lasso: unbounded support direction");
        x += t * dir;
        remove_at(hit);
        continue;
      }
      const Vector delta = sub.x - x;
      double t = 1.0;
      const Eigen::Index hit = blocking(delta, 1.0, t);
      if (hit >= 0) {
        if (t * delta.norm() > 1e-12 * (1.0 + x.norm()))
          std::fill(stuck.begin(), stuck.end(), 0);
        else if (S[static_cast<std::size_t>(hit)] == just_added)
          stuck[static_cast<std::size_t>(just_added)] = 1;
        just_added = -1;
        x += t * delta;
        remove_at(hit);
        continue;
      }
      if (delta.norm() > 1e-12 * (1.0 + x.norm())) std::fill(stuck.begin(), stuck.end(), 0);
      x = sub.x;
      nu = sub.nu;
      at_minimizer = true;
      just_added = -1;
    }

    // Optimality of the coefficients held at zero.
    const Vector resid = FS * x - d;
    Vector c = F_.transpose() * resid;
    if (A_.rows()) c += A_.transpose() * nu;
    std::vector<char> in_support(static_cast<std::size_t>(n), 0);
    for (int j : S) in_support[static_cast<std::size_t>(j)] = 1;
    gap = 0.0;
    Eigen::Index worst = -1;
    double worst_ratio = 0.0;
    const double rn = resid.norm();
    const double nn = nu.size() ? nu.norm() : 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (in_support[static_cast<std::size_t>(j)]) continue;
      const double excess = std::abs(c(j)) - lambda;
      const double scale = lambda + F_norms_(j) * rn + A_norms_(j) * nn;
      if (!stuck[static_cast<std::size_t>(j)] && excess > tol_ * scale && excess / scale > worst_ratio) {
        worst_ratio = excess / scale;
        worst = j;
      }
      gap = std::max(gap, excess);
    }
    if (worst < 0) {
      rep.converged = true;
      break;
    }
    S.push_back(static_cast<int>(worst));
    just_added = static_cast<int>(worst);
    x.conservativeResize(x.size() + 1);
    x(x.size() - 1) = 0.0;
    theta.conservativeResize(theta.size() + 1);
    theta(theta.size() - 1) = -sgn(c(worst));
    at_minimizer = false;
  }

  Vector g = Vector::Zero(n);
  for (std::size_t k = 0; k < S.size(); ++k) g(S[k]) = x(static_cast<Eigen::Index>(k));
  if (warm != nullptr) {
    warm->support = S;
    warm->signs.assign(theta.data(), theta.data() + theta.size());
  }
  rep.iterations = it;
  rep.multiplier = nu;
  rep.dual_residual = std::max(gap, 0.0);
  rep.primal_residual = A_.rows() ? (A_ * g - b_eq).norm() : 0.0;
  rep.objective = 0.5 * (F_ * g - d).squaredNorm() + lambda * g.lpNorm<1>();
  rep.x = std::move(g);
  return rep;
}

}  // namespace kddpc
