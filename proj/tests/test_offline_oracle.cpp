#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>

#include "koopman_ddpc/offline_oracle.hpp"
#include "oracles.hpp"

using namespace kddpc;

namespace {

Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }

LiftedLinearSystem scalar_system() { return {scalar(0.5), scalar(1), scalar(1)}; }

std::vector<Vector> scalar_refs(std::initializer_list<double> v) {
  std::vector<Vector> out;
  for (double x : v) out.push_back(scalar(x));
  return out;
}

CostWeights quartic_weights(double R = 1.0) {
  return CostWeights((Matrix(2, 2) << 0, 0, 0, 1).finished(), scalar(R));
}

}  // namespace

TEST_CASE("disturbances") {
  const auto sys = quartic_manifold();
  const auto r = sine_reference(2, 1, 1.0, 60.0, 50);
  const auto w = disturbances(sys, r);
  REQUIRE(w.size() == 49);
  for (int t = 1; t < 50; ++t) {
    Vector expect = Vector::Zero(5);
    expect(1) = 0.9 * std::sin(std::numbers::pi * t / 30.0) - std::sin(std::numbers::pi * (t + 1) / 30.0);
    CHECK((w.at(t) - expect).norm() <= 1e-14);
  }
  std::vector<Vector> zeros(10, Vector::Zero(2));
  CHECK(disturbances(slow_manifold(), ReferenceTrajectory(zeros)).bound == 0.0);
}

TEST_CASE("scalar offline optimum by hand") {
  const CostWeights w(scalar(1), scalar(1));
  const auto sol = optimal_controls(scalar_system(), w, scalar_refs({0, 0}), scalar(1));
  REQUIRE(sol.controls.size() == 2);
  CHECK(sol.controls[0](0) == doctest::Approx(-0.25));
  CHECK(sol.controls[1](0) == 0.0);
  CHECK(sol.cost == doctest::Approx(1.125));
}

TEST_CASE("zero reference at rest costs nothing") {
  const auto sys = quartic_manifold();
  std::vector<Vector> zeros(30, Vector::Zero(2));
  const auto sol = optimal_controls(sys, quartic_weights(), ReferenceTrajectory(zeros), Vector::Zero(2));
  CHECK(sol.cost == 0.0);
  for (const auto& u : sol.controls) CHECK(u.norm() == 0.0);
}

TEST_CASE("scalar value-function blocks by hand") {
  const CostWeights w(scalar(1), scalar(1));
  // r_1 = 0, r_2 = -1 gives w_1 = A psi(r_1) - psi(r_2) = 1.
  const auto vf = value_coeffs(scalar_system(), w, scalar_refs({0, -1}));
  CHECK(vf.v(1)(0) == doctest::Approx(0.5));
  CHECK(vf.q(1) == doctest::Approx(0.5));
  CHECK(vf.v(2)(0) == 0.0);
  CHECK(vf.q(2) == 0.0);
  CHECK(vf.evaluate(2, scalar(3)) == doctest::Approx(16.0));
}

TEST_CASE("zero disturbance gives a pure quadratic value") {
  const auto sys = slow_manifold();
  std::vector<Vector> zeros(12, Vector::Zero(3));
  const auto vf = value_coeffs(sys.lifted(), CostWeights(Matrix::Identity(2, 2), scalar(1)), zeros);
  for (int t = 1; t <= 12; ++t) {
    CHECK(vf.v(t).norm() == 0.0);
    CHECK(vf.q(t) == 0.0);
  }
}

TEST_CASE("quartic offline optimum matches the dense QP") {
  const auto sys = quartic_manifold();
  const auto w = quartic_weights();
  const auto r = sine_reference(2, 1, 1.0, 60.0, 200);
  const Vector z1 = (Vector(2) << 0.5, 0).finished();
  const auto refs = r.lifted(sys);
  const auto sol = optimal_controls(sys, w, r, z1);
  const auto& L = sys.lifted();
  const auto dense = oracle::dense_tracking(L.A, L.B, w.lifted_Q(L.C), w.R(), refs, sys.lift(z1));
  CHECK(sol.cost == doctest::Approx(dense.cost).epsilon(1e-8));
  double max_du = 0.0;
  for (std::size_t t = 0; t < dense.u.size(); ++t) max_du = std::max(max_du, (sol.controls[t] - dense.u[t]).norm());
  CHECK(max_du <= 1e-8);

  const auto vf = value_coeffs(L, w, refs);
  CHECK(vf.evaluate(1, sys.lift(z1)) == doctest::Approx(dense.cost).epsilon(1e-8));
  CHECK(vf.max_recursion_residual() <= 1e-10);
}

TEST_CASE("policy at arbitrary states is the restarted optimum") {
  const auto sys = quartic_manifold();
  const auto w = quartic_weights();
  const auto r = sine_reference(2, 1, 1.0, 60.0, 40);
  const auto refs = r.lifted(sys);
  const OfflinePolicy pol(sys.lifted(), w, refs);
  std::mt19937 gen(1);
  std::uniform_real_distribution<double> d(-1, 1);
  for (int t : {1, 17, 39}) {
    Vector x(5);
    for (int k = 0; k < 5; ++k) x(k) = d(gen);
    const std::vector<Vector> tail(refs.begin() + (t - 1), refs.end());
    const auto L = sys.lifted();
    const auto dense = oracle::dense_tracking(L.A, L.B, w.lifted_Q(L.C), w.R(), tail, x);
    CHECK((pol.control(t, x) - dense.u.front()).norm() <= 1e-9);
  }
  CHECK(pol.control(40, Vector::Ones(5)).norm() == 0.0);
}
