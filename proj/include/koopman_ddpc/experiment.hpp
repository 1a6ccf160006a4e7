#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "koopman_ddpc/ddpc_engine.hpp"
#include "koopman_ddpc/predictive_tracking.hpp"
#include "koopman_ddpc/regret_metrics.hpp"

namespace kddpc {

struct ReferenceSpec {
  std::string kind = "sine";  ///< "sine" | "heart" | "csv"
  double M = 1.0;
  double period = 60.0;
  int component = 1;          ///< zero-based state index for "sine"
  int cycles = 2;
  int steps_per_cycle = 400;
  std::string path;
};

struct DataSpec {
  std::optional<int> length;  ///< default: 2W+24 (Koopman systems), 1500 (unicycle)
  Vector input_low;
  Vector input_high;
  std::uint64_t seed = 1;
  std::vector<Vector> initial_states;  ///< one trajectory per entry
  std::string dir;                     ///< load persisted data instead of collecting
};

struct ControllerSpec {
  std::string kind = "ddpc";  ///< "lmpc" | "lmpc_qp" | "ddpc" | "reg_ddpc"
  double lambda_g = 2.0;
  double lambda_z = 3e6;
  bool switching = true;
  std::string solver = "active_set";  ///< "active_set" | "admm"
  AdmmSettings admm;
};

/// Parsed experiment description; every field has a system-dependent default.
struct ExperimentConfig {
  std::string system = "quartic_manifold";
  double dt = 0.025;
  int T = 200;
  std::vector<int> W_list{12};
  int T_ini = 10;
  std::optional<int> n_x;
  Vector z1;
  Vector Qz_diag;
  std::vector<double> R_list{1.0};
  std::vector<double> M_list;  ///< empty: reference.M only
  ReferenceSpec reference;
  DataSpec data;
  ControllerSpec controller;
  std::string out_dir;
  std::filesystem::path base_dir;  ///< relative paths resolve against this
};

/// Parse JSON text; unknown keys raise kConfig naming the key.
ExperimentConfig parse_config(const std::string& json_text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);
std::string config_schema();

KoopmanSystem config_system(const ExperimentConfig& cfg);
ReferenceTrajectory config_reference(const ExperimentConfig& cfg, double M);
CostWeights config_weights(const ExperimentConfig& cfg, double R_scale);

/// Offline data for horizon W: loaded from data.dir/data_W<W> when set, collected otherwise.
std::vector<ExcitationData> config_data(const ExperimentConfig& cfg, const KoopmanSystem& sys, int W);
int config_data_length(const ExperimentConfig& cfg, const KoopmanSystem& sys, int W);

struct RunOutcome {
  TrackingRun run;
  std::optional<RegretReport> regret;
  double position_mse = 0.0;  ///< unicycle only
  double runtime_ms = 0.0;
};

RunOutcome run_experiment(const ExperimentConfig& cfg, int W, double R_scale, double M,
                          bool with_decomposition = true);

struct CommandResult {
  int exit_code = 0;  ///< 0 ok, 1 config, 2 numerical, 3 diagnostic
  std::string summary;
  std::vector<std::string> files;
};

CommandResult cmd_verify(const ExperimentConfig& cfg, const std::filesystem::path& out, int jobs);
CommandResult cmd_collect(const ExperimentConfig& cfg, const std::filesystem::path& out, int jobs);
CommandResult cmd_track(const ExperimentConfig& cfg, const std::filesystem::path& out, int jobs);
CommandResult cmd_sweep(const ExperimentConfig& cfg, const std::filesystem::path& out, int jobs);

/// Dispatch by name and map library errors onto the exit-code contract.
CommandResult run_command(const std::string& command, const ExperimentConfig& cfg,
                          const std::filesystem::path& out, int jobs);
int exit_code_for(ErrorCode code);

/// Runs fn(i) for i in [0, n) on up to `jobs` threads; rethrows the first failure.
void parallel_for(int n, int jobs, const std::function<void(int)>& fn);

}  // namespace kddpc
