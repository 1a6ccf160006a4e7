#include "koopman_ddpc/experiment.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <numbers>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "koopman_ddpc/csv_io.hpp"

namespace kddpc {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

bool is_koopman(const std::string& id) { return id == "quartic_manifold" || id == "slow_manifold"; }

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  require(obj.is_object(), ErrorCode::kConfig, where + " must be a JSON object");
  for (auto it = obj.begin(); it != obj.end(); ++it)
    require(allowed.count(it.key()) > 0, ErrorCode::kConfig,
            "unknown key '" + it.key() + "' in " + where);
}

double get_number(const json& v, const std::string& key) {
  require(v.is_number(), ErrorCode::kConfig, "'" + key + "' must be a number");
  const double x = v.get<double>();
  require(std::isfinite(x), ErrorCode::kConfig, "'" + key + "' must be finite");
  return x;
}

int get_int(const json& v, const std::string& key) {
  require(v.is_number_integer(), ErrorCode::kConfig, "'" + key + "' must be an integer");
  return v.get<int>();
}

Vector get_vector(const json& v, const std::string& key) {
  require(v.is_array(), ErrorCode::kConfig, "'" + key + "' must be an array of numbers");
  Vector out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i)
    out(static_cast<Eigen::Index>(i)) = get_number(v[i], key);
  return out;
}

std::vector<double> get_number_list(const json& v, const std::string& key) {
  if (v.is_number()) return {get_number(v, key)};
  const Vector x = get_vector(v, key);
  require(x.size() > 0, ErrorCode::kConfig, "'" + key + "' must not be empty");
  return {x.data(), x.data() + x.size()};
}

std::string get_string(const json& v, const std::string& key) {
  require(v.is_string(), ErrorCode::kConfig, "'" + key + "' must be a string");
  return v.get<std::string>();
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

}  // namespace

std::string config_schema() {
  return R"schema({
  "system": "quartic_manifold | slow_manifold | unicycle",
  "dt": "unicycle sampling time (default 0.025)",
  "T": "horizon (default 200; heart and csv references set it)",
  "W": "prediction horizon or list of horizons",
  "T_ini": "history length (default 10, unicycle 5)",
  "n_x": "lifted dimension or an upper bound (default: embedding size)",
  "z1": "initial state",
  "weights": {"Qz_diag": "diagonal of Q_z", "R": "scale of R = r I, or a list for sweeps"},
  "reference": {"kind": "sine | heart | csv", "M": "sine magnitude", "M_list": "magnitudes for sweeps",
                "period": "sine period in steps (default 60)", "component": "zero-based index (default 1)",
                "cycles": "heart cycles (default 2)", "steps_per_cycle": "heart samples per cycle (default 400)",
                "path": "csv file with columns t,r_1,..."},
  "data": {"length": "samples per trajectory", "input_low": "per input", "input_high": "per input",
           "seed": "64-bit seed", "initial_states": "one initial state per trajectory",
           "dir": "directory written by collect"},
  "controller": {"kind": "lmpc | lmpc_qp | ddpc | reg_ddpc", "lambda_g": "l1 weight",
                 "lambda_z": "slack weight", "switching": "orientation switching (unicycle)",
                 "solver": "active_set | admm (regularised DDPC)",
                 "max_iter": "ADMM iterations", "tol": "ADMM tolerance", "rho": "ADMM penalty"},
  "out_dir": "output directory"
}
)schema";
}

ExperimentConfig parse_config(const std::string& json_text, const fs::path& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::kConfig, std::string("config is not valid JSON: ") + e.what());
  }
  reject_unknown(j, {"system", "dt", "T", "W", "T_ini", "n_x", "z1", "weights", "reference", "data",
                     "controller", "out_dir"},
                 "config");
  ExperimentConfig cfg;
  cfg.base_dir = base_dir;
  if (j.contains("system")) cfg.system = get_string(j["system"], "system");
  require(is_koopman(cfg.system) || cfg.system == "unicycle", ErrorCode::kConfig,
          "unknown system '" + cfg.system + "'");
  const bool robot = cfg.system == "unicycle";
  if (j.contains("dt")) cfg.dt = get_number(j["dt"], "dt");
  const KoopmanSystem sys = make_system(cfg.system, cfg.dt);

  // System-dependent defaults.
  if (robot) {
    cfg.T_ini = 5;
    cfg.Qz_diag = Vector(3);
    cfg.Qz_diag << 1.0, 1.0, 2.0;
    cfg.R_list = {1.3e-3};
    cfg.reference.kind = "heart";
    cfg.controller.kind = "reg_ddpc";
    cfg.data.input_low = Vector(2);
    cfg.data.input_high = Vector(2);
    cfg.data.input_low << 10.0, -std::numbers::pi / 6.0;
    cfg.data.input_high << 20.0, std::numbers::pi / 6.0;
    for (int q = 0; q < 4; ++q) {
      Vector z0(3);
      z0 << 0.0, 0.0, (2 * q + 1) * std::numbers::pi / 4.0;
      cfg.data.initial_states.push_back(z0);
    }
  } else {
    cfg.Qz_diag = Vector::Zero(sys.nz());
    cfg.Qz_diag(sys.nz() - 1) = 1.0;
    cfg.z1 = Vector::Zero(sys.nz());
    cfg.z1(0) = 0.5;
    cfg.data.input_low = -Vector::Ones(sys.nu());
    cfg.data.input_high = Vector::Ones(sys.nu());
    Vector z0 = Vector::Zero(sys.nz());
    z0(0) = 1.0;
    cfg.data.initial_states.push_back(z0);
  }

  bool T_given = false;
  if (j.contains("T")) {
    cfg.T = get_int(j["T"], "T");
    T_given = true;
  }
  if (j.contains("W")) {
    cfg.W_list.clear();
    if (j["W"].is_array()) {
      for (const auto& w : j["W"]) cfg.W_list.push_back(get_int(w, "W"));
    } else {
      cfg.W_list.push_back(get_int(j["W"], "W"));
    }
    require(!cfg.W_list.empty(), ErrorCode::kConfig, "'W' must not be empty");
  }
  if (j.contains("T_ini")) cfg.T_ini = get_int(j["T_ini"], "T_ini");
  if (j.contains("n_x")) cfg.n_x = get_int(j["n_x"], "n_x");
  if (j.contains("z1")) cfg.z1 = get_vector(j["z1"], "z1");
  if (j.contains("out_dir")) cfg.out_dir = get_string(j["out_dir"], "out_dir");

  if (j.contains("weights")) {
    const json& w = j["weights"];
    reject_unknown(w, {"Qz_diag", "R"}, "weights");
    if (w.contains("Qz_diag")) cfg.Qz_diag = get_vector(w["Qz_diag"], "Qz_diag");
    if (w.contains("R")) cfg.R_list = get_number_list(w["R"], "R");
  }
  if (j.contains("reference")) {
    const json& r = j["reference"];
    reject_unknown(r, {"kind", "M", "M_list", "period", "component", "cycles", "steps_per_cycle", "path"},
                   "reference");
    if (r.contains("kind")) cfg.reference.kind = get_string(r["kind"], "kind");
    if (r.contains("M")) cfg.reference.M = get_number(r["M"], "M");
    if (r.contains("M_list")) cfg.M_list = get_number_list(r["M_list"], "M_list");
    if (r.contains("period")) cfg.reference.period = get_number(r["period"], "period");
    if (r.contains("component")) cfg.reference.component = get_int(r["component"], "component");
    if (r.contains("cycles")) cfg.reference.cycles = get_int(r["cycles"], "cycles");
    if (r.contains("steps_per_cycle"))
      cfg.reference.steps_per_cycle = get_int(r["steps_per_cycle"], "steps_per_cycle");
    if (r.contains("path")) cfg.reference.path = get_string(r["path"], "path");
  }
  if (j.contains("data")) {
    const json& d = j["data"];
    reject_unknown(d, {"length", "input_low", "input_high", "seed", "initial_states", "dir"}, "data");
    if (d.contains("length")) cfg.data.length = get_int(d["length"], "length");
    if (d.contains("input_low")) cfg.data.input_low = get_vector(d["input_low"], "input_low");
    if (d.contains("input_high")) cfg.data.input_high = get_vector(d["input_high"], "input_high");
    if (d.contains("seed")) {
      require(d["seed"].is_number_unsigned() || d["seed"].is_number_integer(), ErrorCode::kConfig,
              "'seed' must be a nonnegative integer");
      require(!(d["seed"].is_number_integer() && d["seed"].get<long long>() < 0), ErrorCode::kConfig,
              "'seed' must be a nonnegative integer");
      cfg.data.seed = d["seed"].get<std::uint64_t>();
    }
    if (d.contains("initial_states")) {
      require(d["initial_states"].is_array() && !d["initial_states"].empty(), ErrorCode::kConfig,
              "'initial_states' must be a non-empty array of states");
      cfg.data.initial_states.clear();
      for (const auto& s : d["initial_states"]) cfg.data.initial_states.push_back(get_vector(s, "initial_states"));
    }
    if (d.contains("dir")) cfg.data.dir = get_string(d["dir"], "dir");
  }
  if (j.contains("controller")) {
    const json& c = j["controller"];
    reject_unknown(c, {"kind", "lambda_g", "lambda_z", "switching", "solver", "max_iter", "tol", "rho"},
                   "controller");
    if (c.contains("solver")) cfg.controller.solver = get_string(c["solver"], "solver");
    if (c.contains("kind")) cfg.controller.kind = get_string(c["kind"], "kind");
    if (c.contains("lambda_g")) cfg.controller.lambda_g = get_number(c["lambda_g"], "lambda_g");
    if (c.contains("lambda_z")) cfg.controller.lambda_z = get_number(c["lambda_z"], "lambda_z");
    if (c.contains("switching")) {
      require(c["switching"].is_boolean(), ErrorCode::kConfig, "'switching' must be a boolean");
      cfg.controller.switching = c["switching"].get<bool>();
    }
    if (c.contains("max_iter")) cfg.controller.admm.max_iter = get_int(c["max_iter"], "max_iter");
    if (c.contains("tol")) cfg.controller.admm.tol = get_number(c["tol"], "tol");
    if (c.contains("rho")) cfg.controller.admm.rho = get_number(c["rho"], "rho");
  }

  // Reference-driven horizons.
  const auto& kind = cfg.reference.kind;
  require(kind == "sine" || kind == "heart" || kind == "csv", ErrorCode::kConfig,
          "unknown reference kind '" + kind + "'");
  if (kind == "heart") {
    const int T_ref = cfg.reference.cycles * cfg.reference.steps_per_cycle;
    require(!T_given || cfg.T == T_ref, ErrorCode::kConfig,
            "T=" + std::to_string(cfg.T) + " conflicts with heart reference length " + std::to_string(T_ref));
    cfg.T = T_ref;
  } else if (kind == "csv") {
    require(!cfg.reference.path.empty(), ErrorCode::kConfig, "csv reference needs 'path'");
    const fs::path p = resolve(base_dir, cfg.reference.path);
    require(fs::exists(p), ErrorCode::kIo, "reference file not found: " + p.string());
    const int T_ref = reference_from_table(CsvTable::parse(read_file(p))).horizon();
    require(!T_given || cfg.T == T_ref, ErrorCode::kConfig,
            "T=" + std::to_string(cfg.T) + " conflicts with reference file length " + std::to_string(T_ref));
    cfg.T = T_ref;
  }

  const auto& ck = cfg.controller.kind;
  require(ck == "lmpc" || ck == "lmpc_qp" || ck == "ddpc" || ck == "reg_ddpc", ErrorCode::kConfig,
          "unknown controller kind '" + ck + "'");
  require(cfg.controller.solver == "active_set" || cfg.controller.solver == "admm", ErrorCode::kConfig,
          "unknown solver '" + cfg.controller.solver + "'");
  require(cfg.T >= 2, ErrorCode::kConfig, "T must be >= 2");
  require(cfg.T_ini >= 1, ErrorCode::kConfig, "T_ini must be >= 1");
  for (int W : cfg.W_list)
    require(W >= 1 && W < cfg.T, ErrorCode::kConfig,
            "W=" + std::to_string(W) + " must satisfy 1 <= W < T=" + std::to_string(cfg.T));
  require(cfg.Qz_diag.size() == sys.nz(), ErrorCode::kConfig,
          "Qz_diag needs " + std::to_string(sys.nz()) + " entries");
  for (double R : cfg.R_list) require(R > 0.0, ErrorCode::kConfig, "R scale must be positive");
  require(cfg.z1.size() == 0 || cfg.z1.size() == sys.nz(), ErrorCode::kConfig,
          "z1 needs " + std::to_string(sys.nz()) + " entries");
  require(cfg.data.input_low.size() == sys.nu() && cfg.data.input_high.size() == sys.nu(),
          ErrorCode::kConfig, "input bounds need " + std::to_string(sys.nu()) + " entries");
  for (const auto& s : cfg.data.initial_states)
    require(s.size() == sys.nz(), ErrorCode::kConfig, "data initial states need n_z entries");
  if (cfg.data.length) require(*cfg.data.length >= 1, ErrorCode::kConfig, "data length must be >= 1");
  if (!cfg.data.dir.empty()) {
    const fs::path p = resolve(base_dir, cfg.data.dir);
    require(fs::is_directory(p), ErrorCode::kIo, "data directory not found: " + p.string());
  }
  require(cfg.controller.lambda_g >= 0.0 && cfg.controller.lambda_z >= 0.0, ErrorCode::kConfig,
          "regularisation weights must be nonnegative");
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
  require(fs::exists(path), ErrorCode::kIo, "config file not found: " + path.string());
  return parse_config(read_file(path), path.parent_path());
}

KoopmanSystem config_system(const ExperimentConfig& cfg) { return make_system(cfg.system, cfg.dt); }

ReferenceTrajectory config_reference(const ExperimentConfig& cfg, double M) {
  const KoopmanSystem sys = config_system(cfg);
  const auto& spec = cfg.reference;
  if (spec.kind == "sine") {
    require(spec.component >= 0 && spec.component < sys.nz(), ErrorCode::kConfig,
            "reference component outside the state");
    return sine_reference(sys.nz(), spec.component, M, spec.period, cfg.T);
  }
  if (spec.kind == "heart") return heart_reference(spec.cycles, spec.steps_per_cycle);
  const ReferenceTrajectory r =
      reference_from_table(CsvTable::parse(read_file(resolve(cfg.base_dir, spec.path))));
  require(r.dim() == sys.nz(), ErrorCode::kConfig, "reference file dimension differs from n_z");
  return r;
}

CostWeights config_weights(const ExperimentConfig& cfg, double R_scale) {
  const KoopmanSystem sys = config_system(cfg);
  return CostWeights(cfg.Qz_diag.asDiagonal().toDenseMatrix(),
                     R_scale * Matrix::Identity(sys.nu(), sys.nu()));
}

int config_data_length(const ExperimentConfig& cfg, const KoopmanSystem& sys, int W) {
  if (cfg.data.length) return *cfg.data.length;
  return sys.has_embedding() ? 2 * W + 24 : 1500;
}

namespace {

fs::path data_subdir(int W) { return "data_W" + std::to_string(W); }

std::vector<ExcitationData> collect_all(const ExperimentConfig& cfg, const KoopmanSystem& sys, int W) {
  const int length = config_data_length(cfg, sys, W);
  const int L = cfg.T_ini + W;
  require(length >= L, ErrorCode::kTooShort,
          "data length " + std::to_string(length) + " is too short: need at least L = T_ini + W = " +
              std::to_string(L));
  const int nx = cfg.n_x ? *cfg.n_x : sys.nx();
  if (nx > 0 && cfg.data.initial_states.size() == 1) {
    const int need = minimum_excitation_length(sys.nu(), nx, cfg.T_ini, W);
    require(length >= need, ErrorCode::kTooShort,
            "data length " + std::to_string(length) + " is too short for lifted excitation: need at least " +
                std::to_string(need));
  }
  std::vector<ExcitationData> out;
  for (std::size_t j = 0; j < cfg.data.initial_states.size(); ++j)
    out.push_back(collect_excitation(sys, cfg.data.initial_states[j], length, cfg.data.input_low,
                                     cfg.data.input_high, cfg.data.seed + j));
  return out;
}

}  // namespace

std::vector<ExcitationData> config_data(const ExperimentConfig& cfg, const KoopmanSystem& sys, int W) {
  if (cfg.data.dir.empty()) return collect_all(cfg, sys, W);
  const fs::path dir = resolve(cfg.base_dir, cfg.data.dir) / data_subdir(W);
  for (const char* name : {"u_d.csv", "z_d.csv"})
    require(fs::exists(dir / name), ErrorCode::kIo, "data file not found: " + (dir / name).string());
  auto data = data_from_tables(CsvTable::parse(read_file(dir / "u_d.csv")),
                               CsvTable::parse(read_file(dir / "z_d.csv")));
  for (const auto& d : data)
    require(d.u.front().size() == sys.nu() && d.z.front().size() == sys.nz(), ErrorCode::kConfig,
            "persisted data dimensions do not match the system");
  const fs::path desc = dir / "library.json";
  if (fs::exists(desc)) {
    const json j = json::parse(read_file(desc));
    const std::uint64_t seed = j.value("source_seed", std::uint64_t{0});
    for (std::size_t k = 0; k < data.size(); ++k) data[k].seed = seed + k;
  }
  return data;
}

namespace {

std::unique_ptr<StepController> make_controller(const ExperimentConfig& cfg, const KoopmanSystem& sys,
                                                const CostWeights& weights, int W) {
  const auto& kind = cfg.controller.kind;
  if (kind == "lmpc") return lmpc_closed_form(sys, weights, W);
  if (kind == "lmpc_qp") return lmpc_qp(sys, weights, W);
  const std::vector<ExcitationData> data = config_data(cfg, sys, W);
  if (kind == "ddpc") return ddpc_controller(DataLibrary(data, cfg.T_ini, W), weights);

  RegDdpcParams params;
  params.lambda_g = cfg.controller.lambda_g;
  params.lambda_z = cfg.controller.lambda_z;
  params.admm = cfg.controller.admm;
  params.method = cfg.controller.solver == "admm" ? LassoMethod::kAdmm : LassoMethod::kActiveSet;
  const bool switching = cfg.controller.switching && sys.id() == "unicycle" && data.size() == 4;
  if (!switching) return reg_ddpc_controller({DataLibrary(data, cfg.T_ini, W)}, weights, params, std::nullopt);

  OrientationSwitcher switcher(2);
  std::vector<std::optional<DataLibrary>> slots(4);
  for (const auto& d : data) {
    const int q = switcher.select(d.z.front());
    require(!slots[static_cast<std::size_t>(q)], ErrorCode::kConfig,
            "two data trajectories start in heading quadrant " + std::to_string(q));
    slots[static_cast<std::size_t>(q)] = DataLibrary({d}, cfg.T_ini, W);
  }
  std::vector<DataLibrary> libs;
  for (auto& s : slots) libs.push_back(std::move(*s));
  return reg_ddpc_controller(std::move(libs), weights, params, switcher);
}

}  // namespace

RunOutcome run_experiment(const ExperimentConfig& cfg, int W, double R_scale, double M,
                          bool with_decomposition) {
  const auto start = std::chrono::steady_clock::now();
  const KoopmanSystem sys = config_system(cfg);
  const ReferenceTrajectory r = config_reference(cfg, M);
  const CostWeights weights = config_weights(cfg, R_scale);
  Vector z1 = cfg.z1;
  if (z1.size() == 0) z1 = r.at(1);
  auto ctrl = make_controller(cfg, sys, weights, W);

  RunOutcome out;
  out.run = run_receding_horizon(sys, *ctrl, r, z1, W, weights);
  if (sys.has_embedding()) {
    const OracleCost oracle = oracle_cost(sys, weights, r, out.run.states.front());
    out.regret = regret_report(out.run, sys, weights, r, oracle, with_decomposition);
  }
  if (sys.nz() >= 2) {
    double se = 0.0;
    for (int t = 0; t < out.run.horizon(); ++t) {
      const auto k = static_cast<std::size_t>(t);
      se += (out.run.states[k].head(2) - out.run.targets[k].head(2)).squaredNorm();
    }
    out.position_mse = se / out.run.horizon();
  }
  out.runtime_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return out;
}

void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  const int workers = std::max(1, std::min(jobs, n));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
  std::atomic<int> next{0};
  auto work = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int k = 0; k < workers; ++k) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

namespace {

std::string text_csv(const std::vector<std::vector<std::string>>& rows) {
  std::string s;
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) s += ',';
      s += row[i];
    }
    s += '\n';
  }
  return s;
}

struct Outputs {
  fs::path dir;
  CommandResult* result;
  void write(const std::string& name, const std::string& content) {
    write_file_atomic(dir / name, content);
    result->files.push_back((dir / name).string());
  }
};

std::string tag(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

}  // namespace

CommandResult cmd_verify(const ExperimentConfig& cfg, const fs::path& out, int jobs) {
  CommandResult res;
  Outputs o{out, &res};
  const KoopmanSystem sys = config_system(cfg);
  std::vector<std::vector<std::string>> rows{{"check", "value", "threshold", "status"}};
  std::ostringstream summary;
  bool failed = false;
  auto record = [&](const std::string& name, double value, double threshold, const std::string& status) {
    rows.push_back({name, format_double(value), format_double(threshold), status});
    summary << name << ": " << status << " (" << format_double(value) << ")\n";
    if (status == "fail") failed = true;
  };

  if (sys.has_embedding()) {
    UniformSource rng(cfg.data.seed);
    std::vector<std::pair<Vector, Vector>> samples;
    for (int k = 0; k < 1000; ++k) {
      Vector z(sys.nz()), u(sys.nu());
      for (int i = 0; i < sys.nz(); ++i) z(i) = rng.next(-2.0, 2.0);
      for (int i = 0; i < sys.nu(); ++i) u(i) = rng.next(-2.0, 2.0);
      samples.emplace_back(z, u);
    }
    const EmbeddingReport emb = verify_embedding(sys, samples, 1e-10);
    const double worst = std::max(emb.max_dynamics_residual, emb.max_recovery_residual);
    record("embedding_residual", worst, 1e-10, emb.pass ? "pass" : "fail");

    const LiftedLinearSystem& lifted = sys.lifted();
    for (double R : cfg.R_list) {
      const CostWeights w = config_weights(cfg, R);
      const StabilityDiagnostics diag =
          stability_diagnostics(lifted.A, lifted.B, w.lifted_Q(lifted.C), w.R(), cfg.T);
      const std::string sfx = "_R" + tag(R);
      record("dare_residual" + sfx, diag.dare_residual, 1e-10, diag.dare_residual <= 1e-10 ? "pass" : "fail");
      record("closed_loop_spectral_radius" + sfx, diag.rho_cl, 1.0, diag.rho_cl < 1.0 ? "pass" : "fail");
      record("riccati_convergence_r2" + sfx, diag.rho_inf_fit_r2, 0.95,
             diag.rho_inf_fit_r2 >= 0.95 ? "pass" : "fail");
      record("riccati_convergence_rate" + sfx, diag.rho_inf_est, 1.0, diag.rho_inf_est < 1.0 ? "pass" : "fail");
      record("stabilizing_window_estimate" + sfx, diag.delta_stab_est, cfg.T, "info");
    }
  }

  const int nx = cfg.n_x ? *cfg.n_x : sys.nx();
  if (nx > 0) {
    record("T_ini_vs_n_x", cfg.T_ini, nx, cfg.T_ini >= nx ? "pass" : "warn");
    if (cfg.T_ini < nx)
      summary << "warning: T_ini=" << cfg.T_ini << " is below n_x=" << nx
              << "; the data-driven representation is not guaranteed\n";
  }

  const bool data_based = cfg.controller.kind == "ddpc" || cfg.controller.kind == "reg_ddpc";
  if (data_based) {
    std::vector<std::vector<std::string>> extra(cfg.W_list.size());
    std::vector<ExcitationReport> reps(cfg.W_list.size());
    std::vector<int> cols(cfg.W_list.size());
    parallel_for(static_cast<int>(cfg.W_list.size()), jobs, [&](int i) {
      const int W = cfg.W_list[static_cast<std::size_t>(i)];
      const DataLibrary lib(config_data(cfg, sys, W), cfg.T_ini, W);
      cols[static_cast<std::size_t>(i)] = lib.columns();
      if (sys.has_embedding()) reps[static_cast<std::size_t>(i)] = check_lifted_excitation(lib, sys);
    });
    for (std::size_t i = 0; i < cfg.W_list.size(); ++i) {
      const std::string sfx = "_W" + std::to_string(cfg.W_list[i]);
      if (sys.has_embedding())
        record("lifted_excitation_rank" + sfx, reps[i].rank, reps[i].required, reps[i].pass ? "pass" : "fail");
      else
        record("library_columns" + sfx, cols[i], 1, "pass");
    }
  }

  o.write("verify.csv", text_csv(rows));
  res.summary = summary.str();
  res.exit_code = failed ? 3 : 0;
  return res;
}

CommandResult cmd_collect(const ExperimentConfig& cfg, const fs::path& out, int jobs) {
  CommandResult res;
  Outputs o{out, &res};
  const KoopmanSystem sys = config_system(cfg);
  std::vector<std::vector<ExcitationData>> all(cfg.W_list.size());
  parallel_for(static_cast<int>(cfg.W_list.size()), jobs, [&](int i) {
    const int W = cfg.W_list[static_cast<std::size_t>(i)];
    all[static_cast<std::size_t>(i)] = collect_all(cfg, sys, W);
    DataLibrary(all[static_cast<std::size_t>(i)], cfg.T_ini, W);  // validates the length
  });
  std::ostringstream summary;
  for (std::size_t i = 0; i < cfg.W_list.size(); ++i) {
    const int W = cfg.W_list[i];
    const fs::path sub = data_subdir(W);
    o.write((sub / "u_d.csv").string(), data_table(all[i], true).to_string());
    o.write((sub / "z_d.csv").string(), data_table(all[i], false).to_string());
    json desc;
    desc["T_ini"] = cfg.T_ini;
    desc["W"] = W;
    desc["n_u"] = sys.nu();
    desc["n_z"] = sys.nz();
    desc["source_seed"] = cfg.data.seed;
    desc["rng"] = UniformSource::kAlgorithm;
    desc["trajectories"] = static_cast<int>(all[i].size());
    desc["length"] = static_cast<int>(all[i].front().u.size());
    o.write((sub / "library.json").string(), desc.dump(2) + "\n");
    summary << "W=" << W << ": " << all[i].size() << " trajectories of length "
            << all[i].front().u.size() << "\n";
  }
  res.summary = summary.str();
  return res;
}

CommandResult cmd_track(const ExperimentConfig& cfg, const fs::path& out, int jobs) {
  CommandResult res;
  Outputs o{out, &res};
  const double R = cfg.R_list.front();
  const double M = cfg.reference.M;
  std::vector<RunOutcome> runs(cfg.W_list.size());
  parallel_for(static_cast<int>(cfg.W_list.size()), jobs, [&](int i) {
    runs[static_cast<std::size_t>(i)] = run_experiment(cfg, cfg.W_list[static_cast<std::size_t>(i)], R, M);
  });
  std::ostringstream summary;
  CsvTable metrics;
  metrics.header = {"W", "total_cost", "position_mse", "mean_solve_ms"};
  CsvTable regret;
  regret.header = {"W", "J_T", "J_star", "regret", "identity", "identity_gap", "truncation", "feedback",
                   "feedforward"};
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const int W = cfg.W_list[i];
    const auto& oc = runs[i];
    o.write("run_W" + std::to_string(W) + ".csv", run_table(oc.run).to_string());
    double ms = 0.0;
    for (double v : oc.run.solve_ms) ms += v;
    metrics.rows.push_back({static_cast<double>(W), oc.run.total_cost, oc.position_mse,
                            ms / std::max(1, oc.run.horizon())});
    summary << "W=" << W << ": J_T=" << format_double(oc.run.total_cost);
    if (oc.regret) {
      const auto& rr = *oc.regret;
      regret.rows.push_back({static_cast<double>(W), rr.J_T, rr.J_star, rr.regret, rr.identity,
                             rr.identity_gap, rr.terms.truncation, rr.terms.feedback, rr.terms.feedforward});
      summary << " regret=" << format_double(rr.regret) << " identity_gap=" << format_double(rr.identity_gap);
    } else {
      summary << " position_mse=" << format_double(oc.position_mse);
    }
    summary << "\n";
  }
  o.write("metrics.csv", metrics.to_string());
  if (!regret.rows.empty()) o.write("regret.csv", regret.to_string());
  res.summary = summary.str();
  return res;
}

CommandResult cmd_sweep(const ExperimentConfig& cfg, const fs::path& out, int jobs) {
  std::set<int> distinct(cfg.W_list.begin(), cfg.W_list.end());
  require(distinct.size() >= 3, ErrorCode::kConfig, "sweep needs >= 3 W values");
  require(config_system(cfg).has_embedding(), ErrorCode::kUnsupported,
          "regret sweeps need a system with an exact embedding");
  CommandResult res;
  Outputs o{out, &res};
  const std::vector<double> Ms = cfg.M_list.empty() ? std::vector<double>{cfg.reference.M} : cfg.M_list;
  struct Task {
    double R, M;
    int W;
  };
  std::vector<Task> tasks;
  for (double R : cfg.R_list)
    for (double M : Ms)
      for (int W : cfg.W_list) tasks.push_back({R, M, W});
  std::vector<SweepRow> rows(tasks.size());
  parallel_for(static_cast<int>(tasks.size()), jobs, [&](int i) {
    const Task& t = tasks[static_cast<std::size_t>(i)];
    const RunOutcome oc = run_experiment(cfg, t.W, t.R, t.M);
    SweepRow row;
    row.W = t.W;
    row.regret = oc.regret->regret;
    row.log_regret = row.regret > 0.0 ? std::log(row.regret) : -std::numeric_limits<double>::infinity();
    row.terms = oc.regret->terms;
    row.identity_gap = oc.regret->identity_gap;
    row.runtime_ms = oc.runtime_ms;
    rows[static_cast<std::size_t>(i)] = row;
  });

  CsvTable fits;
  fits.header = {"R", "M", "slope", "intercept", "r2", "slope_stderr", "points"};
  std::ostringstream summary, plot;
  plot << "set datafile separator ','\nset logscale y\nset xlabel 'W'\nset ylabel 'dynamic regret'\n"
       << "set key top right\nplot ";
  const std::size_t per = cfg.W_list.size();
  for (std::size_t g = 0; g * per < rows.size(); ++g) {
    const std::vector<SweepRow> group(rows.begin() + static_cast<long>(g * per),
                                      rows.begin() + static_cast<long>((g + 1) * per));
    const Task& t = tasks[g * per];
    const SweepFit fit = fit_sweep(group);
    const std::string name = "sweep_R" + tag(t.R) + "_M" + tag(t.M) + ".csv";
    o.write(name, sweep_table(group, fit.fit.slope).to_string());
    fits.rows.push_back({t.R, t.M, fit.fit.slope, fit.fit.intercept, fit.fit.r2, fit.fit.slope_stderr,
                         static_cast<double>(fit.fit.points)});
    summary << "R=" << tag(t.R) << " M=" << tag(t.M) << ": slope=" << format_double(fit.fit.slope)
            << " r2=" << format_double(fit.fit.r2) << " stderr=" << format_double(fit.fit.slope_stderr);
    if (!fit.excluded.empty()) summary << " (excluded " << fit.excluded.size() << " converged rows)";
    summary << "\n";
    plot << (g ? ", " : "") << "'" << name << "' skip 1 using 1:2 with linespoints title 'R=" << tag(t.R)
         << " M=" << tag(t.M) << "'";
  }
  plot << "\n";
  o.write("fits.csv", fits.to_string());
  o.write("regret.gp", plot.str());
  res.summary = summary.str();
  return res;
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfig:
    case ErrorCode::kIo:
    case ErrorCode::kTooShort:
    case ErrorCode::kUnsupported:
    case ErrorCode::kDimension:
    case ErrorCode::kMismatch:
      return 1;
    default:
      return 2;
  }
}

CommandResult run_command(const std::string& command, const ExperimentConfig& cfg, const fs::path& out,
                          int jobs) {
  if (command == "verify") return cmd_verify(cfg, out, jobs);
  if (command == "collect") return cmd_collect(cfg, out, jobs);
  if (command == "track") return cmd_track(cfg, out, jobs);
  if (command == "sweep") return cmd_sweep(cfg, out, jobs);
  fail(ErrorCode::kConfig, "unknown command '" + command + "'");
}

}  // namespace kddpc
