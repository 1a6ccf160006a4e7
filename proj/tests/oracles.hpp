#pragma once

// Independent reference computations used by the tests. None of these call
// into the Riccati or predictive-control code they are compared against.

#include <vector>

#include <Eigen/Dense>

namespace oracle {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct DenseTracking {
  std::vector<Vector> u;  // u_1 .. u_{K}
  std::vector<Vector> x;  // x_1 .. x_{K+1}
  double cost = 0.0;
};

// Condensed least squares for
//   min sum_{t=1}^{K+1} ||x_t - s_t||_Q^2 + sum_{t=1}^{K} ||u_t||_R^2,  x_{t+1} = A x_t + B u_t,
// over u_1..u_K with x_1 fixed, where K = targets.size() - 1.
inline DenseTracking dense_tracking(const Matrix& A, const Matrix& B, const Matrix& Q,
                                    const Matrix& R, const std::vector<Vector>& targets,
                                    const Vector& x1) {
  const int n = static_cast<int>(A.rows()), m = static_cast<int>(B.cols());
  const int N = static_cast<int>(targets.size()), K = N - 1;
  Matrix S = Matrix::Zero(n * N, m * K);
  Vector free_x(n * N);
  free_x.head(n) = x1;
  for (int t = 1; t < N; ++t) free_x.segment(t * n, n) = A * free_x.segment((t - 1) * n, n);
  // Column block s of S is B, AB, A^2B, ... starting at row block s+1.
  for (int s = 0; s < K; ++s) {
    Matrix P = B;
    for (int t = s + 1; t < N; ++t) {
      S.block(t * n, s * m, n, m) = P;
      P = A * P;
    }
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eq(Q), er(R);
  const Matrix Qh = eq.eigenvectors() * eq.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
                    eq.eigenvectors().transpose();
  const Matrix Rh = er.eigenvectors() * er.eigenvalues().cwiseSqrt().asDiagonal() *
                    er.eigenvectors().transpose();
  Matrix M = Matrix::Zero(n * N + m * K, m * K);
  Vector rhs = Vector::Zero(n * N + m * K);
  for (int t = 0; t < N; ++t) {
    M.middleRows(t * n, n) = Qh * S.middleRows(t * n, n);
    rhs.segment(t * n, n) = Qh * (targets[static_cast<std::size_t>(t)] - free_x.segment(t * n, n));
  }
  for (int s = 0; s < K; ++s) M.block(n * N + s * m, s * m, m, m) = Rh;
  const Vector U = M.colPivHouseholderQr().solve(rhs);
  const Vector X = free_x + S * U;
  DenseTracking out;
  for (int s = 0; s < K; ++s) out.u.push_back(U.segment(s * m, m));
  for (int t = 0; t < N; ++t) {
    const Vector x = X.segment(t * n, n);
    out.x.push_back(x);
    const Vector e = x - targets[static_cast<std::size_t>(t)];
    out.cost += e.dot(Q * e);
  }
  for (const auto& u : out.u) out.cost += u.dot(R * u);
  return out;
}

// Hankel matrix of a vector-valued signal: column j stacks w_j .. w_{j+L-1}.
inline Matrix hankel(const std::vector<Vector>& w, int L) {
  const int d = static_cast<int>(w.front().size());
  const int cols = static_cast<int>(w.size()) - L + 1;
  Matrix H(d * L, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < L; ++i) H.block(i * d, j, d, 1) = w[static_cast<std::size_t>(j + i)];
  return H;
}

}  // namespace oracle
