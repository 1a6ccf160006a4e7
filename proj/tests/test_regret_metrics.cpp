#include "doctest.h"

#include <cmath>

#include "koopman_ddpc/regret_metrics.hpp"
#include "oracles.hpp"

using namespace kddpc;

namespace {

Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }

CostWeights quartic_weights() { return CostWeights((Matrix(2, 2) << 0, 0, 0, 1).finished(), scalar(1)); }

struct Setup {
  KoopmanSystem sys = quartic_manifold();
  CostWeights w = quartic_weights();
  ReferenceTrajectory r;
  Vector z1 = (Vector(2) << 0.5, 0).finished();
  explicit Setup(int T) : r(sine_reference(2, 1, 1.0, 60.0, T)) {}

  TrackingRun lmpc(int W) const {
    auto c = lmpc_closed_form(sys, w, W);
    return run_receding_horizon(sys, *c, r, z1, W, w);
  }
};

}  // namespace

TEST_CASE("regret against a hand-assembled dense optimum") {
  const Setup s(120);
  const auto run = s.lmpc(8);
  const auto oc = oracle_cost(s.sys, s.w, s.r, s.z1);
  const auto& L = s.sys.lifted();
  const auto dense = oracle::dense_tracking(L.A, L.B, s.w.lifted_Q(L.C), s.w.R(), s.r.lifted(s.sys), s.sys.lift(s.z1));
  CHECK(oc.cost == doctest::Approx(dense.cost).epsilon(1e-9));
  const double reg = dynamic_regret(run, oc);
  CHECK(reg == doctest::Approx(run.total_cost - dense.cost).epsilon(1e-8));
  CHECK(reg > 0.0);
  CHECK(lifted_run_cost(run, s.sys, s.w) == doctest::Approx(run.total_cost).epsilon(1e-12));
}

TEST_CASE("full-window run has zero regret and zero deviation") {
  const Setup s(60);
  const auto run = s.lmpc(60);
  const auto oc = oracle_cost(s.sys, s.w, s.r, s.z1);
  CHECK(std::abs(dynamic_regret(run, oc)) <= 1e-8 * (1 + oc.cost));
  const auto dev = deviation_identity(run, s.sys, s.w, s.r);
  CHECK(dev.total <= 1e-16 * (1 + oc.cost));
  const auto parts = decompose_bound(run, s.sys, s.w, s.r, 60);
  CHECK(parts.truncation == 0.0);
  CHECK(parts.feedback == 0.0);
  CHECK(parts.feedforward == 0.0);
}

TEST_CASE("deviation identity equals the regret") {
  const Setup s(200);
  const auto oc = oracle_cost(s.sys, s.w, s.r, s.z1);
  for (int W : {5, 10, 15}) {
    const auto run = s.lmpc(W);
    const auto dev = deviation_identity(run, s.sys, s.w, s.r);
    CHECK(std::abs(dynamic_regret(run, oc) - dev.total) <= 1e-6 * (1 + oc.cost));
    for (int t = 200 - W + 1; t <= 200; ++t) CHECK(dev.per_step[static_cast<std::size_t>(t - 1)] <= 1e-20);
  }
}

TEST_CASE("setup mismatch is refused") {
  const Setup s(60);
  const auto run = s.lmpc(10);
  auto oc = oracle_cost(s.sys, s.w, s.r, s.z1);
  oc.z1(0) += 0.1;
  CHECK_THROWS_AS(dynamic_regret(run, oc), Error);
  auto other = oracle_cost(s.sys, s.w, sine_reference(2, 1, 1.0, 60.0, 61), s.z1);
  CHECK_THROWS_AS(dynamic_regret(run, other), Error);
}

TEST_CASE("the three deviation parts add up to the control deviation") {
  const Setup s(100);
  const int T = 100, W = 6;
  const auto run = s.lmpc(W);
  const auto& L = s.sys.lifted();
  const Matrix Q = s.w.lifted_Q(L.C);
  const auto refs = s.r.lifted(s.sys);
  const auto full = riccati_recursion(L.A, L.B, Q, s.w.R(), T);
  const auto local = riccati_recursion(L.A, L.B, Q, s.w.R(), W);
  const OfflinePolicy pol(L, s.w, refs);
  std::vector<Vector> wd;
  for (int t = 1; t < T; ++t) wd.push_back(L.A * refs[static_cast<std::size_t>(t - 1)] - refs[static_cast<std::size_t>(t)]);

  double trunc = 0, fb = 0, ff = 0, identity_head = 0;
  for (int t = 1; t <= T - W; ++t) {
    const Vector x = s.sys.lift(run.states[static_cast<std::size_t>(t - 1)]);
    const Vector e = x - refs[static_cast<std::size_t>(t - 1)];
    Vector a = Vector::Zero(1), b = (full.K(t) - local.K(1)) * e, c = Vector::Zero(1);
    for (int i = t + W - 1; i <= T - 1; ++i) a += feedforward_gain(full, t, i) * wd[static_cast<std::size_t>(i - 1)];
    for (int i = t; i <= t + W - 2; ++i)
      c += (feedforward_gain(full, t, i) - feedforward_gain(local, 1, i - t + 1)) * wd[static_cast<std::size_t>(i - 1)];
    const Vector dev = run.controls[static_cast<std::size_t>(t - 1)] - pol.control(t, x);
    CHECK((dev - (a + b + c)).norm() <= 1e-10 * (1 + dev.norm()));
    const Matrix& S = full.Sigma(t);
    trunc += a.dot(S * a);
    fb += b.dot(S * b);
    ff += c.dot(S * c);
    identity_head += dev.dot(S * dev);
  }
  const auto parts = decompose_bound(run, s.sys, s.w, s.r, W);
  CHECK(parts.truncation == doctest::Approx(trunc).epsilon(1e-10));
  CHECK(parts.feedback == doctest::Approx(fb).epsilon(1e-10));
  CHECK(parts.feedforward == doctest::Approx(ff).epsilon(1e-10));
  // ||a+b+c||^2 <= 3(||a||^2+||b||^2+||c||^2) always holds.
  const auto dev = deviation_identity(run, s.sys, s.w, s.r);
  CHECK(dev.total == doctest::Approx(identity_head).epsilon(1e-10));
  CHECK(dev.total <= 3.0 * parts.sum() * (1 + 1e-12));
}

TEST_CASE("every deviation part shrinks with a longer window") {
  const Setup s(200);
  const auto p6 = decompose_bound(s.lmpc(6), s.sys, s.w, s.r, 6);
  const auto p12 = decompose_bound(s.lmpc(12), s.sys, s.w, s.r, 12);
  CHECK(p12.truncation < p6.truncation);
  CHECK(p12.feedback < p6.feedback);
  CHECK(p12.feedforward < p6.feedforward);
}

TEST_CASE("regret report bundles consistent numbers") {
  const Setup s(120);
  const auto run = s.lmpc(10);
  const auto oc = oracle_cost(s.sys, s.w, s.r, s.z1);
  const auto rep = regret_report(run, s.sys, s.w, s.r, oc, true);
  CHECK(rep.regret == doctest::Approx(rep.J_T - rep.J_star));
  CHECK(rep.identity_gap == doctest::Approx(std::abs(rep.regret - rep.identity)));
  CHECK(rep.identity_gap <= 1e-6 * (1 + oc.cost));
  CHECK(rep.per_step_deviation.size() == 120);
}

TEST_CASE("sweep fit") {
  std::vector<SweepRow> rows;
  for (int W : {4, 6, 8, 10}) {
    SweepRow r;
    r.W = W;
    r.regret = std::exp(-static_cast<double>(W));
    rows.push_back(r);
  }
  const auto fit = fit_sweep(rows);
  CHECK(fit.fit.slope == doctest::Approx(-1.0).epsilon(1e-9));
  CHECK(fit.fit.r2 == doctest::Approx(1.0));
  CHECK(fit.excluded.empty());

  rows[3].regret = 1e-16;
  const auto trimmed = fit_sweep(rows);
  CHECK(trimmed.excluded == std::vector<int>{10});
  CHECK(trimmed.fit.points == 3);
  rows[2].regret = -1e-15;
  CHECK_THROWS_AS(fit_sweep(rows), Error);
}
