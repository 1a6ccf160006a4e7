#include "doctest.h"

#include <random>

#include "koopman_ddpc/linalg_qp.hpp"

using namespace kddpc;

namespace {

Matrix random_matrix(int r, int c, std::mt19937& gen) {
  std::normal_distribution<double> d;
  Matrix M(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) M(i, j) = d(gen);
  return M;
}

Vector random_vector(int n, std::mt19937& gen) { return random_matrix(n, 1, gen); }

// Dense KKT solve for a strictly convex equality QP.
Vector kkt_oracle(const Matrix& H, const Vector& f, const Matrix& A, const Vector& b) {
  const int n = static_cast<int>(H.rows()), m = static_cast<int>(A.rows());
  Matrix K = Matrix::Zero(n + m, n + m);
  K.topLeftCorner(n, n) = H;
  K.topRightCorner(n, m) = A.transpose();
  K.bottomLeftCorner(m, n) = A;
  Vector rhs(n + m);
  rhs << -f, b;
  return K.fullPivLu().solve(rhs).head(n);
}

double lasso_objective(const Matrix& F, const Vector& d, double lambda, const Vector& x) {
  return 0.5 * (F * x - d).squaredNorm() + lambda * x.lpNorm<1>();
}

}  // namespace

TEST_CASE("eq-QP hand examples") {
  const auto r1 = solve_eq_qp({Matrix::Identity(2, 2), Vector::Zero(2), Matrix::Ones(1, 2), Vector::Constant(1, 2.0)});
  CHECK(r1.x(0) == doctest::Approx(1.0));
  CHECK(r1.x(1) == doctest::Approx(1.0));
  CHECK(r1.objective == doctest::Approx(1.0));

  const auto r2 = solve_eq_qp({Matrix::Identity(3, 3), Vector::Zero(3), Matrix(0, 3), Vector(0)});
  CHECK(r2.x.norm() == 0.0);

  Matrix H = Matrix::Zero(2, 2);
  H(0, 0) = 1;
  const auto r3 = solve_eq_qp({H, Vector::Zero(2), (Matrix(1, 2) << 1, 0).finished(), Vector::Constant(1, 3.0)});
  CHECK(r3.x(0) == doctest::Approx(3.0));
  CHECK(std::abs(r3.x(1)) <= 1e-12);
}

TEST_CASE("eq-QP matches dense KKT on random instances") {
  std::mt19937 gen(11);
  for (int trial = 0; trial < 5; ++trial) {
    const Matrix M = random_matrix(8, 8, gen);
    const Matrix H = M * M.transpose() + Matrix::Identity(8, 8);
    const Vector f = random_vector(8, gen);
    const Matrix A = random_matrix(3, 8, gen);
    const Vector b = random_vector(3, gen);
    const auto rep = EqQpSolver(H, A).solve(f, b);
    CHECK((rep.x - kkt_oracle(H, f, A, b)).norm() <= 1e-9);
    CHECK(rep.primal_residual <= 1e-10);
    CHECK((H * rep.x + f + A.transpose() * rep.multiplier).norm() <= 1e-8);
  }
}

TEST_CASE("eq-QP failures") {
  SUBCASE("infeasible") {
    Matrix A(2, 2);
    A << 1, 1, 1, 1;
    CHECK_THROWS_AS(solve_eq_qp({Matrix::Identity(2, 2), Vector::Zero(2), A, (Vector(2) << 1, 2).finished()}), Error);
  }
  SUBCASE("unbounded") {
    Matrix H = Matrix::Zero(2, 2);
    H(0, 0) = 1;
    try {
      solve_eq_qp({H, (Vector(2) << 0, 1).finished(), Matrix(0, 2), Vector(0)});
      FAIL("expected unbounded");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kUnbounded);
    }
  }
}

TEST_CASE("pseudo-inverse solves") {
  const auto a = pinv_solve(Matrix::Identity(2, 2), (Vector(2) << 1, 2).finished());
  CHECK(a.rank == 2);
  CHECK(a.x == (Vector(2) << 1, 2).finished());
  const auto b = pinv_solve(Matrix::Ones(1, 2), Vector::Constant(1, 2.0));
  CHECK(b.rank == 1);
  CHECK(b.x(0) == doctest::Approx(1.0));
  CHECK(b.x(1) == doctest::Approx(1.0));
  const auto c = pinv_solve(Matrix::Zero(2, 2), Vector::Zero(2));
  CHECK(c.rank == 0);
  CHECK(c.x.norm() == 0.0);
}

TEST_CASE("equality projector splits range and null space") {
  std::mt19937 gen(3);
  const Matrix A = random_matrix(3, 7, gen);
  const EqualityProjector P(A);
  CHECK(P.rank() == 3);
  CHECK((A * P.null_basis()).norm() <= 1e-12);
  CHECK((P.null_basis().transpose() * P.null_basis() - Matrix::Identity(4, 4)).norm() <= 1e-12);
  const Vector b = random_vector(3, gen);
  const Vector xp = P.particular(b);
  CHECK((A * xp - b).norm() <= 1e-12);
  CHECK((xp - A.completeOrthogonalDecomposition().pseudoInverse() * b).norm() <= 1e-12);
  CHECK(EqualityProjector(Matrix(0, 4)).rank() == 0);
}

TEST_CASE("least-squares eq solver matches the normal-equation QP") {
  std::mt19937 gen(5);
  const Matrix F = random_matrix(12, 9, gen);
  const Matrix A = random_matrix(4, 9, gen);
  const Vector d = random_vector(12, gen), b = random_vector(4, gen);
  const auto rep = LeastSquaresEqSolver(F, A).solve(d, b);
  const Vector oracle = kkt_oracle(F.transpose() * F, -F.transpose() * d, A, b);
  CHECK((rep.x - oracle).norm() <= 1e-9);

  // Wide F: minimum-norm solution among minimizers.
  const Matrix Fw = random_matrix(3, 9, gen);
  const Vector dw = random_vector(3, gen);
  const auto wide = LeastSquaresEqSolver(Fw, A).solve(dw, b);
  Matrix S(7, 9);
  S << Fw, A;
  Vector rhs(7);
  rhs << dw, b;
  CHECK((wide.x - S.completeOrthogonalDecomposition().pseudoInverse() * rhs).norm() <= 1e-9);
}

TEST_CASE("soft threshold and scalar prox examples") {
  const Vector v = (Vector(3) << 3, -0.2, -2).finished();
  const Vector s = soft_threshold(v, 1.0);
  CHECK(s == (Vector(3) << 2, 0, -1).finished());

  L1SlackQP zero;
  zero.core = {Matrix::Identity(1, 1), Vector::Zero(1), Matrix(0, 1), Vector(0)};
  zero.l1_block = {0, 1};
  zero.l1_weight = 0.5;
  CHECK(std::abs(solve_l1_slack_qp(zero).x(0)) <= 1e-8);

  L1SlackQP shrink = zero;
  shrink.core.f = Vector::Constant(1, -3.0);
  shrink.l1_weight = 1.0;
  CHECK(solve_l1_slack_qp(shrink).x(0) == doctest::Approx(2.0).epsilon(1e-6));

  L1SlackQP plain;
  plain.core = {Matrix::Identity(2, 2), Vector::Zero(2), Matrix::Ones(1, 2), Vector::Constant(1, 2.0)};
  const auto p = solve_l1_slack_qp(plain);
  CHECK(std::abs(p.x(0) - 1) <= 1e-6);
  CHECK(std::abs(p.x(1) - 1) <= 1e-6);
}

TEST_CASE("l1 solvers agree with each other and with optimality conditions") {
  std::mt19937 gen(21);
  const int m = 6, n = 30, p = 2;
  const Matrix F = random_matrix(m, n, gen);
  const Matrix A = random_matrix(p, n, gen);
  const Vector d = random_vector(m, gen) * 5.0, b = random_vector(p, gen);
  const double lambda = 0.7;

  ActiveSetLasso active(F, A);
  const auto as = active.solve(d, b, lambda);
  REQUIRE(as.converged);
  CHECK(as.primal_residual <= 1e-10);

  AdmmSettings tight;
  tight.tol = 1e-10;
  tight.max_iter = 200000;
  LassoEqSolver admm(F, A, tight);
  const auto ad = admm.solve(d, b, lambda);
  REQUIRE(ad.converged);

  L1SlackQP general;
  general.core = {F.transpose() * F, -F.transpose() * d, A, b};
  general.l1_block = {0, n};
  general.l1_weight = lambda;
  const auto gq = solve_l1_slack_qp(general, tight);

  const double obj = lasso_objective(F, d, lambda, as.x);
  CHECK(obj == doctest::Approx(lasso_objective(F, d, lambda, ad.x)).epsilon(1e-7));
  CHECK(obj == doctest::Approx(lasso_objective(F, d, lambda, gq.x)).epsilon(1e-6));
  CHECK((as.x - ad.x).norm() <= 1e-5 * (1 + as.x.norm()));

  // Subgradient conditions with the equality multiplier from a least-squares fit.
  const Vector grad = F.transpose() * (F * as.x - d);
  std::vector<int> support;
  for (int j = 0; j < n; ++j)
    if (as.x(j) != 0.0) support.push_back(j);
  Matrix At(static_cast<int>(support.size()), p);
  Vector rhs(static_cast<int>(support.size()));
  for (std::size_t k = 0; k < support.size(); ++k) {
    const int j = support[k];
    At.row(static_cast<int>(k)) = A.col(j).transpose();
    rhs(static_cast<int>(k)) = -grad(j) - lambda * (as.x(j) > 0 ? 1.0 : -1.0);
  }
  const Vector nu = At.colPivHouseholderQr().solve(rhs);
  const Vector c = grad + A.transpose() * nu;
  for (int j = 0; j < n; ++j) {
    if (as.x(j) != 0.0)
      CHECK(c(j) == doctest::Approx(-lambda * (as.x(j) > 0 ? 1.0 : -1.0)).epsilon(1e-7));
    else
      CHECK(std::abs(c(j)) <= lambda * (1 + 1e-7));
  }
}

TEST_CASE("active-set warm start reproduces the cold solution") {
  std::mt19937 gen(4);
  const Matrix F = random_matrix(5, 40, gen);
  const Matrix A = random_matrix(2, 40, gen);
  ActiveSetLasso solver(F, A);
  ActiveSetLasso::WarmStart warm;
  for (int k = 0; k < 4; ++k) {
    const Vector d = random_vector(5, gen) * 3.0, b = random_vector(2, gen);
    const auto hot = solver.solve(d, b, 0.3, &warm);
    const auto cold = solver.solve(d, b, 0.3);
    REQUIRE(hot.converged);
    CHECK(lasso_objective(F, d, 0.3, hot.x) == doctest::Approx(lasso_objective(F, d, 0.3, cold.x)).epsilon(1e-10));
  }
  CHECK_THROWS(solver.solve(Vector::Zero(5), Vector::Zero(2), 0.0));
}

TEST_CASE("active-set handles a zero equality right-hand side") {
  std::mt19937 gen(8);
  const Matrix F = random_matrix(4, 20, gen);
  const Matrix A = random_matrix(2, 20, gen);
  const Vector d = random_vector(4, gen) * 4.0;
  const auto rep = ActiveSetLasso(F, A).solve(d, Vector::Zero(2), 0.2);
  CHECK(rep.converged);
  CHECK(rep.primal_residual <= 1e-12);
  CHECK(rep.x.norm() > 0.0);
}
