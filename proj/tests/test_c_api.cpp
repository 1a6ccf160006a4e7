#include "doctest.h"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <string>

#include "koopman_ddpc/koopman_ddpc.h"

namespace fs = std::filesystem;

TEST_CASE("version and status names") {
  CHECK(std::strlen(kddpc_version()) > 0);
  CHECK(std::string(kddpc_status_name(KDDPC_OK)) != std::string(kddpc_status_name(KDDPC_ERR_CONFIG)));
}

TEST_CASE("system handle") {
  kddpc_system* sys = nullptr;
  REQUIRE(kddpc_system_create("slow_manifold", 0.025, &sys) == KDDPC_OK);
  int nz = 0, nu = 0, nx = 0;
  REQUIRE(kddpc_system_dims(sys, &nz, &nu, &nx) == KDDPC_OK);
  CHECK(nz == 2);
  CHECK(nu == 1);
  CHECK(nx == 3);
  const double z[2] = {1, 2}, u[1] = {0.5};
  double next[2], x[3];
  REQUIRE(kddpc_system_step(sys, z, u, next) == KDDPC_OK);
  CHECK(next[0] == doctest::Approx(0.99));
  CHECK(next[1] == doctest::Approx(3.5));
  REQUIRE(kddpc_system_lift(sys, z, x) == KDDPC_OK);
  CHECK(x[2] == 1.0);
  CHECK(kddpc_system_step(sys, nullptr, u, next) == KDDPC_ERR_ARGUMENT);
  kddpc_system_free(sys);

  kddpc_system* robot = nullptr;
  REQUIRE(kddpc_system_create("unicycle", 0.025, &robot) == KDDPC_OK);
  const double zr[3] = {0, 0, 0};
  double xr[3];
  CHECK(kddpc_system_lift(robot, zr, xr) == KDDPC_ERR_CONFIG);
  CHECK(std::strlen(kddpc_last_error()) > 0);
  kddpc_system_free(robot);

  kddpc_system* none = nullptr;
  CHECK(kddpc_system_create("pendulum", 0.025, &none) == KDDPC_ERR_CONFIG);
  CHECK(none == nullptr);
  kddpc_system_free(nullptr);
}

TEST_CASE("scalar DARE through the C boundary") {
  const double A = 0.5, B = 1, Q = 1, R = 1;
  double P = 0, K = 0;
  REQUIRE(kddpc_solve_dare(1, 1, &A, &B, &Q, &R, &P, &K) == KDDPC_OK);
  const double Pexp = (0.25 + std::sqrt(4.0625)) / 2.0;
  CHECK(P == doctest::Approx(Pexp).epsilon(1e-12));
  CHECK(K == doctest::Approx(0.5 * Pexp / (1 + Pexp)).epsilon(1e-12));
  CHECK(kddpc_solve_dare(0, 1, &A, &B, &Q, &R, &P, &K) == KDDPC_ERR_ARGUMENT);
}

TEST_CASE("column-major layout for the DARE") {
  // Two decoupled scalar problems; an off-diagonal entry in A reveals layout mistakes.
  const double A[4] = {0.5, 0.0, 0.2, 0.8};  // A = [[0.5, 0.2], [0, 0.8]]
  const double B[4] = {1, 0, 0, 1};
  const double Q[4] = {1, 0, 0, 1};
  const double R[4] = {1, 0, 0, 1};
  double P[4], K[4];
  REQUIRE(kddpc_solve_dare(2, 2, A, B, Q, R, P, K) == KDDPC_OK);
  // Residual of the DARE computed by hand in column-major arithmetic.
  auto at = [](const double* M, int i, int j) { return M[i + 2 * j]; };
  double worst = 0.0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      // K = (R + B'PB)^{-1} B'PA with B = R = I: K = (I + P)^{-1} P A, so (I+P) K = P A.
      double lhs = 0, rhs = 0;
      for (int k = 0; k < 2; ++k) {
        lhs += ((i == k ? 1.0 : 0.0) + at(P, i, k)) * at(K, k, j);
        rhs += at(P, i, k) * at(A, k, j);
      }
      worst = std::max(worst, std::abs(lhs - rhs));
    }
  CHECK(worst <= 1e-10);
  CHECK(at(P, 0, 1) == doctest::Approx(at(P, 1, 0)));
}

TEST_CASE("experiment handle") {
  kddpc_experiment* exp = nullptr;
  CHECK(kddpc_experiment_parse(R"({"bogus": 1})", ".", &exp) == KDDPC_ERR_CONFIG);
  CHECK(std::string(kddpc_last_error()).find("bogus") != std::string::npos);
  CHECK(exp == nullptr);

  REQUIRE(kddpc_experiment_parse(R"({"system": "quartic_manifold", "W": 6, "T": 40, "out_dir": "somewhere"})", ".",
                                 &exp) == KDDPC_OK);
  CHECK(std::string(kddpc_experiment_config_out_dir(exp)) == "somewhere");
  CHECK(kddpc_experiment_set_seed(exp, 3) == KDDPC_OK);
  const fs::path out = fs::temp_directory_path() / "kddpc_capi_track";
  fs::remove_all(out);
  REQUIRE(kddpc_experiment_run(exp, "track", out.string().c_str(), 1) == KDDPC_OK);
  CHECK(kddpc_experiment_file_count(exp) >= 2);
  CHECK(fs::exists(kddpc_experiment_file(exp, 0)));
  CHECK(kddpc_experiment_file(exp, 99) == nullptr);
  CHECK(std::strlen(kddpc_experiment_summary(exp)) > 0);
  CHECK(kddpc_experiment_run(exp, "dance", out.string().c_str(), 1) == KDDPC_ERR_CONFIG);
  CHECK(kddpc_experiment_run(exp, "sweep", out.string().c_str(), 1) == KDDPC_ERR_CONFIG);
  kddpc_experiment_free(exp);

  CHECK(kddpc_experiment_load("/nonexistent/config.json", &exp) == KDDPC_ERR_CONFIG);
  CHECK(kddpc_experiment_run(nullptr, "track", ".", 1) == KDDPC_ERR_ARGUMENT);
}
