#include "koopman_ddpc/riccati_lqt.hpp"

#include <cmath>
#include <complex>
#include <limits>

namespace kddpc {

namespace {

void check_lq_data(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R) {
  require(A.rows() == A.cols() && A.rows() > 0, ErrorCode::kDimension, "A must be square");
  require(B.rows() == A.rows() && B.cols() > 0, ErrorCode::kDimension, "B rows must match A");
  require(Q.rows() == A.rows() && Q.cols() == A.rows(), ErrorCode::kDimension, "Q must match A");
  require(R.rows() == B.cols() && R.cols() == B.cols(), ErrorCode::kDimension, "R must match B");
}

Matrix symmetrize(const Matrix& M) { return 0.5 * (M + M.transpose()); }

}  // namespace

RiccatiSolution::RiccatiSolution(Matrix A, Matrix B, Matrix Q, Matrix R, int horizon)
    : A_(std::move(A)), B_(std::move(B)), Q_(std::move(Q)), R_(std::move(R)), T_(horizon) {
  check_lq_data(A_, B_, Q_, R_);
  require(T_ >= 2, ErrorCode::kConfig, "Riccati horizon must be at least 2");
  const auto T = static_cast<std::size_t>(T_);
  P_.resize(T + 1);
  K_.resize(T);
  Sigma_.resize(T);
  Acl_.resize(T);
  P_[T] = Q_;
  for (int t = T_ - 1; t >= 1; --t) {
    const auto i = static_cast<std::size_t>(t);
    const Matrix& Pn = P_[i + 1];
    Matrix Sigma = symmetrize(R_ + B_.transpose() * Pn * B_);
    Eigen::LLT<Matrix> llt(Sigma);
    if (llt.info() != Eigen::Success || !Sigma.allFinite()) {
      fail(ErrorCode::kIllPosed, "Sigma_" + std::to_string(t) + " is not positive definite");
    }
    Matrix K = llt.solve(B_.transpose() * Pn * A_);
    P_[i] = symmetrize(Q_ + A_.transpose() * Pn * A_ - A_.transpose() * Pn * B_ * K);
    Acl_[i] = A_ - B_ * K;
    K_[i] = std::move(K);
    Sigma_[i] = std::move(Sigma);
  }
}

const Matrix& RiccatiSolution::P(int t) const {
  require(t >= 1 && t <= T_, ErrorCode::kIndexRange, "P_t index " + std::to_string(t));
  return P_[static_cast<std::size_t>(t)];
}

const Matrix& RiccatiSolution::K(int t) const {
  require(t >= 1 && t < T_, ErrorCode::kIndexRange, "K_t index " + std::to_string(t));
  return K_[static_cast<std::size_t>(t)];
}

const Matrix& RiccatiSolution::Sigma(int t) const {
  require(t >= 1 && t < T_, ErrorCode::kIndexRange, "Sigma_t index " + std::to_string(t));
  return Sigma_[static_cast<std::size_t>(t)];
}

Matrix RiccatiSolution::stage_weight(int t) const { return t == T_ ? R_ : Sigma(t); }

const Matrix& RiccatiSolution::closed_loop(int t) const {
  require(t >= 1 && t < T_, ErrorCode::kIndexRange, "A_cl,t index " + std::to_string(t));
  return Acl_[static_cast<std::size_t>(t)];
}

double RiccatiSolution::max_recursion_residual() const {
  double worst = 0.0;
  for (int t = 1; t < T_; ++t) {
    const Matrix& Pn = P(t + 1);
    const Matrix rhs = Q_ + A_.transpose() * Pn * A_ -
                       A_.transpose() * Pn * B_ * Sigma(t).llt().solve(B_.transpose() * Pn * A_);
    worst = std::max(worst, (P(t) - rhs).norm());
  }
  return worst;
}

RiccatiSolution riccati_recursion(const Matrix& A, const Matrix& B, const Matrix& Q,
                                  const Matrix& R, int T) {
  return RiccatiSolution(A, B, Q, R, T);
}

Matrix closed_loop_transition(const RiccatiSolution& sol, int t1, int t2) {
  require(t1 >= 1 && t1 <= t2 && t2 < sol.horizon(), ErrorCode::kIndexRange,
          "closed_loop_transition needs 1 <= t1 <= t2 < T");
  Matrix M = Matrix::Identity(sol.A().rows(), sol.A().cols());
  for (int k = t1 + 1; k <= t2; ++k) M = sol.closed_loop(k) * M;
  return M;
}

Matrix feedforward_gain(const RiccatiSolution& sol, int t, int i) {
  require(t >= 1 && t <= i && i < sol.horizon(), ErrorCode::kIndexRange,
          "feedforward_gain needs 1 <= t <= i < T");
  const Matrix Phi = closed_loop_transition(sol, t, i);
  return sol.Sigma(t).llt().solve(sol.B().transpose() * Phi.transpose() * sol.P(i + 1));
}

double spectral_radius(const Matrix& M) {
  Eigen::EigenSolver<Matrix> es(M, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

DareSolution solve_dare(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R,
                        double tol, int max_iter) {
  check_lq_data(A, B, Q, R);
  Matrix P = Q;
  double step = std::numeric_limits<double>::infinity();
  int k = 0;
  while (k < max_iter) {
    ++k;
    const Matrix Sigma = symmetrize(R + B.transpose() * P * B);
    const Matrix next = symmetrize(Q + A.transpose() * P * A -
                                   A.transpose() * P * B *
                                       Sigma.llt().solve(B.transpose() * P * A));
    if (!next.allFinite()) break;
    step = (next - P).norm();
    const double scale = 1.0 + P.norm();
    P = next;
    if (step <= tol * scale) break;
  }
  if (!(step <= tol * (1.0 + P.norm()))) {
    fail(ErrorCode::kNoConvergence, "DARE fixed-point iteration stalled, last step " +
                                        std::to_string(step) + " after " + std::to_string(k) +
                                        " iterations (stabilizability/detectability?)");
  }
  DareSolution out;
  out.P = P;
  out.Sigma = symmetrize(R + B.transpose() * P * B);
  out.K = out.Sigma.llt().solve(B.transpose() * P * A);
  out.A_cl = A - B * out.K;
  out.spectral_radius = spectral_radius(out.A_cl);
  const Matrix rhs = Q + A.transpose() * P * A - A.transpose() * P * B * out.K;
  out.residual = (P - rhs).norm() / (1.0 + P.norm());
  out.iterations = k;
  return out;
}

LinearFit fit_line(const std::vector<double>& xs, const std::vector<double>& ys) {
  require(xs.size() == ys.size(), ErrorCode::kDimension, "fit_line: size mismatch");
  LinearFit fit;
  fit.points = static_cast<int>(xs.size());
  require(xs.size() >= 2, ErrorCode::kIllPosed, "fit_line: need at least two points");
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  require(sxx > 0.0, ErrorCode::kIllPosed, "fit_line: abscissae are all equal");
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double sse = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double e = ys[i] - (fit.intercept + fit.slope * xs[i]);
    sse += e * e;
  }
  fit.r2 = syy > 0.0 ? 1.0 - sse / syy : 1.0;
  if (xs.size() > 2) fit.slope_stderr = std::sqrt(sse / (n - 2.0) / sxx);
  return fit;
}

namespace {

// Solves X - M^T X M = I by Kronecker vectorisation (small n) or doubling.
Matrix stein_identity(const Matrix& M) {
  const auto n = M.rows();
  if (n <= 30) {
    const Matrix I = Matrix::Identity(n * n, n * n);
    Matrix kron(n * n, n * n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        kron.block(i * n, j * n, n, n) = M(j, i) * M.transpose();
    const Matrix In = Matrix::Identity(n, n);
    const Vector rhs = Eigen::Map<const Vector>(In.data(), n * n);
    const Vector x = (I - kron).partialPivLu().solve(rhs);
    return symmetrize(Eigen::Map<const Matrix>(x.data(), n, n));
  }
  Matrix X = Matrix::Identity(n, n);
  Matrix Mk = M;
  for (int k = 0; k < 60; ++k) {
    X += Mk.transpose() * X * Mk;
    Mk = Mk * Mk;
    if (Mk.norm() < 1e-16) break;
  }
  return symmetrize(X);
}

}  // namespace

StabilityDiagnostics stability_diagnostics(const Matrix& A, const Matrix& B, const Matrix& Q,
                                           const Matrix& R, int T) {
  StabilityDiagnostics d;
  const DareSolution dare = solve_dare(A, B, Q, R);
  d.dare_residual = dare.residual;
  d.rho_cl = dare.spectral_radius;
  d.gamma_inf = 0.5 * (1.0 + d.rho_cl);

  const RiccatiSolution sol(A, B, Q, R, T);
  std::vector<double> xs, ys;
  for (int t = T; t >= 1; --t) {
    const double e = (sol.P(t) - dare.P).norm();
    if (e > 1e-12) {
      xs.push_back(static_cast<double>(T - t));
      ys.push_back(std::log(e));
    }
  }
  if (xs.size() >= 2) {
    const LinearFit fit = fit_line(xs, ys);
    d.rho_inf_est = std::exp(fit.slope);
    d.rho_inf_fit_r2 = fit.r2;
  }

  // kappa: conditioning of the eigenvector basis of A_cl,inf
  Eigen::EigenSolver<Matrix> es(dare.A_cl);
  double kappa = std::numeric_limits<double>::infinity();
  if (es.info() == Eigen::Success) {
    Eigen::MatrixXcd V = es.eigenvectors();
    for (Eigen::Index j = 0; j < V.cols(); ++j) V.col(j).normalize();
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(V);
    const auto s = svd.singularValues();
    if (s(s.size() - 1) > 0.0) kappa = s(0) / s(s.size() - 1);
  }
  if (!std::isfinite(kappa) || kappa > 1e8) {
    const Matrix X = stein_identity(dare.A_cl / d.gamma_inf);
    Eigen::SelfAdjointEigenSolver<Matrix> ex(X, Eigen::EigenvaluesOnly);
    kappa = std::sqrt(ex.eigenvalues().maxCoeff() / ex.eigenvalues().minCoeff());
    d.kappa_from_lyapunov = true;
  }
  d.kappa_est = std::max(1.0, kappa);

  const double bnorm = B.norm() == 0.0 ? 0.0 : B.jacobiSvd().singularValues()(0);
  const double target = 0.5 * (1.0 - d.rho_cl);
  d.delta_stab_est = T;
  for (int delta = 1; delta < T; ++delta) {
    if ((sol.K(T - delta) - dare.K).norm() * bnorm * d.kappa_est <= target) {
      d.delta_stab_est = delta;
      break;
    }
  }
  return d;
}

}  // namespace kddpc
