#include "koopman_ddpc/koopman_ddpc.h"

#include <new>
#include <string>

#include "koopman_ddpc/experiment.hpp"
#include "koopman_ddpc/riccati_lqt.hpp"

struct kddpc_experiment {
  kddpc::ExperimentConfig config;
  kddpc::CommandResult last;
};

struct kddpc_system {
  kddpc::KoopmanSystem sys;
};

namespace {

thread_local std::string g_last_error;

kddpc_status status_for(kddpc::ErrorCode code) {
  return kddpc::exit_code_for(code) == 1 ? KDDPC_ERR_CONFIG : KDDPC_ERR_NUMERICAL;
}

template <typename Fn>
kddpc_status guarded(Fn&& fn) {
  g_last_error.clear();
  try {
    return fn();
  } catch (const kddpc::Error& e) {
    g_last_error = e.what();
    return status_for(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return KDDPC_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return KDDPC_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown failure";
    return KDDPC_ERR_INTERNAL;
  }
}

kddpc_status bad_argument(const char* what) {
  g_last_error = what;
  return KDDPC_ERR_ARGUMENT;
}

}  // namespace

extern "C" {

const char* kddpc_version(void) { return "1.0.0"; }

const char* kddpc_status_name(kddpc_status status) {
  switch (status) {
    case KDDPC_OK: return "ok";
    case KDDPC_ERR_CONFIG: return "config error";
    case KDDPC_ERR_NUMERICAL: return "numerical failure";
    case KDDPC_ERR_DIAGNOSTIC: return "diagnostic failure";
    case KDDPC_ERR_ARGUMENT: return "invalid argument";
    case KDDPC_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* kddpc_last_error(void) { return g_last_error.c_str(); }

kddpc_status kddpc_experiment_load(const char* config_path, kddpc_experiment** out) {
  if (!config_path || !out) return bad_argument("null argument to kddpc_experiment_load");
  *out = nullptr;
  return guarded([&] {
    *out = new kddpc_experiment{kddpc::load_config(config_path), {}};
    return KDDPC_OK;
  });
}

kddpc_status kddpc_experiment_parse(const char* json_text, const char* base_dir, kddpc_experiment** out) {
  if (!json_text || !out) return bad_argument("null argument to kddpc_experiment_parse");
  *out = nullptr;
  return guarded([&] {
    *out = new kddpc_experiment{kddpc::parse_config(json_text, base_dir ? base_dir : ""), {}};
    return KDDPC_OK;
  });
}

void kddpc_experiment_free(kddpc_experiment* exp) { delete exp; }

kddpc_status kddpc_experiment_set_seed(kddpc_experiment* exp, uint64_t seed) {
  if (!exp) return bad_argument("null experiment");
  exp->config.data.seed = seed;
  return KDDPC_OK;
}

const char* kddpc_experiment_config_out_dir(const kddpc_experiment* exp) {
  return exp ? exp->config.out_dir.c_str() : "";
}

kddpc_status kddpc_experiment_run(kddpc_experiment* exp, const char* command, const char* out_dir,
                                  int jobs) {
  if (!exp || !command || !out_dir) return bad_argument("null argument to kddpc_experiment_run");
  if (jobs < 1) return bad_argument("jobs must be >= 1");
  exp->last = {};
  return guarded([&] {
    exp->last = kddpc::run_command(command, exp->config, out_dir, jobs);
    if (exp->last.exit_code == 3) {
      g_last_error = "one or more verification checks failed";
      return KDDPC_ERR_DIAGNOSTIC;
    }
    return KDDPC_OK;
  });
}

const char* kddpc_experiment_summary(const kddpc_experiment* exp) {
  return exp ? exp->last.summary.c_str() : "";
}

int kddpc_experiment_file_count(const kddpc_experiment* exp) {
  return exp ? static_cast<int>(exp->last.files.size()) : 0;
}

const char* kddpc_experiment_file(const kddpc_experiment* exp, int index) {
  if (!exp || index < 0 || index >= static_cast<int>(exp->last.files.size())) return nullptr;
  return exp->last.files[static_cast<std::size_t>(index)].c_str();
}

kddpc_status kddpc_system_create(const char* id, double dt, kddpc_system** out) {
  if (!id || !out) return bad_argument("null argument to kddpc_system_create");
  *out = nullptr;
  return guarded([&] {
    *out = new kddpc_system{kddpc::make_system(id, dt)};
    return KDDPC_OK;
  });
}

void kddpc_system_free(kddpc_system* sys) { delete sys; }

kddpc_status kddpc_system_dims(const kddpc_system* sys, int* nz, int* nu, int* nx) {
  if (!sys) return bad_argument("null system");
  if (nz) *nz = sys->sys.nz();
  if (nu) *nu = sys->sys.nu();
  if (nx) *nx = sys->sys.nx();
  return KDDPC_OK;
}

kddpc_status kddpc_system_step(const kddpc_system* sys, const double* z, const double* u, double* z_next) {
  if (!sys || !z || !u || !z_next) return bad_argument("null argument to kddpc_system_step");
  return guarded([&] {
    const kddpc::Vector zv = Eigen::Map<const kddpc::Vector>(z, sys->sys.nz());
    const kddpc::Vector uv = Eigen::Map<const kddpc::Vector>(u, sys->sys.nu());
    Eigen::Map<kddpc::Vector>(z_next, sys->sys.nz()) = sys->sys.step(zv, uv);
    return KDDPC_OK;
  });
}

kddpc_status kddpc_system_lift(const kddpc_system* sys, const double* z, double* x) {
  if (!sys || !z || !x) return bad_argument("null argument to kddpc_system_lift");
  return guarded([&] {
    const kddpc::Vector zv = Eigen::Map<const kddpc::Vector>(z, sys->sys.nz());
    const kddpc::Vector xv = sys->sys.lift(zv);
    Eigen::Map<kddpc::Vector>(x, xv.size()) = xv;
    return KDDPC_OK;
  });
}

kddpc_status kddpc_solve_dare(int n, int m, const double* A, const double* B, const double* Q,
                              const double* R, double* P, double* K) {
  if (n < 1 || m < 1) return bad_argument("dimensions must be positive");
  if (!A || !B || !Q || !R || !P || !K) return bad_argument("null argument to kddpc_solve_dare");
  return guarded([&] {
    using kddpc::Matrix;
    const kddpc::DareSolution sol = kddpc::solve_dare(
        Eigen::Map<const Matrix>(A, n, n), Eigen::Map<const Matrix>(B, n, m),
        Eigen::Map<const Matrix>(Q, n, n), Eigen::Map<const Matrix>(R, m, m));
    Eigen::Map<Matrix>(P, n, n) = sol.P;
    Eigen::Map<Matrix>(K, m, n) = sol.K;
    return KDDPC_OK;
  });
}

}  // extern "C"
