#include "doctest.h"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "koopman_ddpc/csv_io.hpp"
#include "koopman_ddpc/experiment.hpp"

using namespace kddpc;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("kddpc_unit_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("config defaults for the quartic system") {
  const auto cfg = parse_config(R"({"system": "quartic_manifold", "W": [4, 8]})");
  CHECK(cfg.W_list == std::vector<int>{4, 8});
  CHECK(cfg.T == 200);
  CHECK(cfg.T_ini == 10);
  CHECK(cfg.z1 == (Vector(2) << 0.5, 0).finished());
  const auto sys = config_system(cfg);
  CHECK(config_data_length(cfg, sys, 8) == 40);
  const auto w = config_weights(cfg, 1.0);
  CHECK(w.Qz() == (Matrix(2, 2) << 0, 0, 0, 1).finished());
  CHECK(w.R()(0, 0) == 1.0);
  CHECK(parse_config(R"({"W": 9})").W_list == std::vector<int>{9});
}

TEST_CASE("config defaults for the robot") {
  const auto cfg = parse_config(R"({"system": "unicycle"})");
  CHECK(cfg.T_ini == 5);
  CHECK(cfg.controller.kind == "reg_ddpc");
  CHECK(cfg.controller.lambda_g == 2.0);
  CHECK(cfg.controller.lambda_z == 3e6);
  CHECK(cfg.data.initial_states.size() == 4);
  CHECK(cfg.data.initial_states[2](2) == doctest::Approx(5 * std::numbers::pi / 4));
  REQUIRE(cfg.R_list.size() == 1);
  const auto w = config_weights(cfg, cfg.R_list.front());
  CHECK(w.Qz().diagonal() == (Vector(3) << 1, 1, 2).finished());
  CHECK(w.R() == Matrix::Identity(2, 2) * 1.3e-3);
  CHECK(config_data_length(cfg, config_system(cfg), 6) == 1500);
  CHECK(cfg.data.input_low(0) == 10.0);
  CHECK(cfg.data.input_high(1) == doctest::Approx(std::numbers::pi / 6));
}

TEST_CASE("config errors name the offending key") {
  auto code_of = [](const std::string& text) {
    try {
      parse_config(text);
    } catch (const Error& e) {
      return std::pair<ErrorCode, std::string>{e.code(), e.what()};
    }
    return std::pair<ErrorCode, std::string>{ErrorCode::kIo, ""};
  };
  const auto [c1, m1] = code_of(R"({"sytem": "quartic_manifold"})");
  CHECK(c1 == ErrorCode::kConfig);
  CHECK(m1.find("sytem") != std::string::npos);
  const auto [c2, m2] = code_of(R"({"controller": {"lambda": 2}})");
  CHECK(c2 == ErrorCode::kConfig);
  CHECK(m2.find("lambda") != std::string::npos);
  CHECK(code_of(R"({"W": "ten"})").first == ErrorCode::kConfig);
  CHECK(code_of("{not json").first == ErrorCode::kConfig);
  CHECK(code_of(R"({"controller": {"solver": "simplex"}})").first == ErrorCode::kConfig);
  CHECK_FALSE(config_schema().empty());
}

TEST_CASE("too-short data names the required length") {
  const auto cfg = parse_config(R"({"system": "quartic_manifold", "W": 8, "data": {"length": 30}})");
  try {
    config_data(cfg, config_system(cfg), 8);
    FAIL("expected a too-short error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kTooShort);
    CHECK(std::string(e.what()).find("40") != std::string::npos);
  }
}

TEST_CASE("exit codes") {
  CHECK(exit_code_for(ErrorCode::kConfig) == 1);
  CHECK(exit_code_for(ErrorCode::kIo) == 1);
  CHECK(exit_code_for(ErrorCode::kTooShort) == 1);
  CHECK(exit_code_for(ErrorCode::kNoConvergence) == 2);
  CHECK(exit_code_for(ErrorCode::kDivergence) == 2);
  CHECK_THROWS_AS(run_command("plot", parse_config("{}"), scratch("plot"), 1), Error);
}

TEST_CASE("CSV tables round-trip exactly") {
  CsvTable t;
  t.header = {"a", "b"};
  t.rows = {{0.1, 1.0 / 3.0}, {-2.5e-300, 12345678901234567.0}};
  const auto back = CsvTable::parse(t.to_string());
  CHECK(back.header == t.header);
  CHECK(back.rows == t.rows);
  CHECK(back.column("b") == 1);
  CHECK(back.column("c") == -1);
  CHECK_THROWS(CsvTable::parse("a,b\n1\n"));
  CHECK_THROWS(CsvTable::parse("a\nx\n"));

  const auto r = heart_reference(1, 50);
  const auto r2 = reference_from_table(CsvTable::parse(reference_table(r).to_string()));
  REQUIRE(r2.horizon() == r.horizon());
  for (int k = 1; k <= r.horizon(); ++k) CHECK(r2.at(k) == r.at(k));
}

TEST_CASE("data tables round-trip") {
  const auto sys = quartic_manifold();
  std::vector<ExcitationData> d{
      collect_excitation(sys, (Vector(2) << 1, 0).finished(), 30, Vector::Constant(1, -1), Vector::Constant(1, 1), 1),
      collect_excitation(sys, (Vector(2) << 1, 0).finished(), 30, Vector::Constant(1, -1), Vector::Constant(1, 1), 2)};
  const auto back = data_from_tables(CsvTable::parse(data_table(d, true).to_string()),
                                     CsvTable::parse(data_table(d, false).to_string()));
  REQUIRE(back.size() == 2);
  for (std::size_t j = 0; j < 2; ++j) {
    CHECK(back[j].u == d[j].u);
    CHECK(back[j].z == d[j].z);
  }
}

TEST_CASE("atomic write replaces content") {
  const auto dir = scratch("atomic");
  write_file_atomic(dir / "x.txt", "one");
  write_file_atomic(dir / "x.txt", "two");
  CHECK(read_file(dir / "x.txt") == "two");
  CHECK(std::distance(fs::directory_iterator(dir), fs::directory_iterator{}) == 1);
  CHECK_THROWS_AS(read_file(dir / "missing.txt"), Error);
}

TEST_CASE("parallel_for covers every index and reports the first failure") {
  std::atomic<int> sum{0};
  parallel_for(50, 4, [&](int i) { sum += i; });
  CHECK(sum == 1225);
  try {
    parallel_for(10, 3, [](int i) {
      if (i == 3 || i == 7) throw Error(ErrorCode::kDivergence, "index " + std::to_string(i));
    });
    FAIL("expected a failure");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("index 3") != std::string::npos);
  }
}

TEST_CASE("verify on the quartic system") {
  const auto dir = scratch("verify");
  auto cfg = parse_config(R"({"system": "quartic_manifold", "W": [5, 10], "T": 120})");
  const auto res = cmd_verify(cfg, dir, 2);
  CHECK(res.exit_code == 0);
  const auto text = slurp(dir / "verify.csv");
  CHECK(text.find("fail") == std::string::npos);
  CHECK(text.find("lifted_excitation_rank_W10") != std::string::npos);

  cfg.T_ini = 3;
  const auto warn = cmd_verify(cfg, dir, 1);
  CHECK(warn.summary.find("warning") != std::string::npos);
}

TEST_CASE("track writes outputs with a tight regret identity") {
  const auto dir = scratch("track");
  const auto cfg = parse_config(R"({"system": "quartic_manifold", "W": 12, "T": 100})");
  const auto res = cmd_track(cfg, dir, 1);
  CHECK(res.exit_code == 0);
  CHECK(fs::exists(dir / "run_W12.csv"));
  const auto reg = CsvTable::parse(slurp(dir / "regret.csv"));
  const int gap = reg.column("identity_gap"), r = reg.column("regret");
  REQUIRE(gap >= 0);
  REQUIRE(r >= 0);
  CHECK(reg.rows.front()[static_cast<std::size_t>(r)] > 0.0);
  CHECK(reg.rows.front()[static_cast<std::size_t>(gap)] <= 1e-6 * (1 + reg.rows.front()[static_cast<std::size_t>(reg.column("J_star"))]));
}

TEST_CASE("collect then track from persisted data reproduces the run") {
  const auto dir = scratch("collect");
  auto cfg = parse_config(R"({"system": "quartic_manifold", "W": 6, "T": 50})");
  CHECK(cmd_collect(cfg, dir, 1).exit_code == 0);
  CHECK(fs::exists(dir / "data_W6" / "u_d.csv"));
  const auto a = run_experiment(cfg, 6, 1.0, 1.0);
  cfg.data.dir = dir.string();
  const auto b = run_experiment(cfg, 6, 1.0, 1.0);
  CHECK(a.run.controls == b.run.controls);

  cfg.data.dir = (dir / "nowhere").string();
  try {
    run_experiment(cfg, 6, 1.0, 1.0);
    FAIL("expected a missing-data error");
  } catch (const Error& e) {
    CHECK(exit_code_for(e.code()) == 1);
    CHECK(std::string(e.what()).find("nowhere") != std::string::npos);
  }
}

TEST_CASE("sweep needs three horizons") {
  const auto cfg = parse_config(R"({"system": "quartic_manifold", "W": [4, 6], "T": 40})");
  CHECK_THROWS_AS(cmd_sweep(cfg, scratch("sweep"), 1), Error);
}
