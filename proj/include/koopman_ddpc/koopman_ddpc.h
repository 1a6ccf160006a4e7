/* C interface to the koopman_ddpc shared library. */
#ifndef KOOPMAN_DDPC_H
#define KOOPMAN_DDPC_H

#include <stdint.h>

#if defined(_WIN32)
#  if defined(KDDPC_BUILDING_LIBRARY)
#    define KDDPC_API __declspec(dllexport)
#  else
#    define KDDPC_API __declspec(dllimport)
#  endif
#else
#  define KDDPC_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Status values double as process exit codes for the CLI (0..3). */
typedef enum kddpc_status {
  KDDPC_OK = 0,
  KDDPC_ERR_CONFIG = 1,     /* bad config, missing file, unsupported request */
  KDDPC_ERR_NUMERICAL = 2,  /* divergence, infeasibility, solver failure */
  KDDPC_ERR_DIAGNOSTIC = 3, /* a verification check failed */
  KDDPC_ERR_ARGUMENT = 4,   /* null pointer or invalid argument */
  KDDPC_ERR_INTERNAL = 5
} kddpc_status;

typedef struct kddpc_experiment kddpc_experiment;
typedef struct kddpc_system kddpc_system;

KDDPC_API const char* kddpc_version(void);
KDDPC_API const char* kddpc_status_name(kddpc_status status);
/* Message for the last failure on the calling thread; empty if none. */
KDDPC_API const char* kddpc_last_error(void);

KDDPC_API kddpc_status kddpc_experiment_load(const char* config_path, kddpc_experiment** out);
KDDPC_API kddpc_status kddpc_experiment_parse(const char* json_text, const char* base_dir,
                                              kddpc_experiment** out);
KDDPC_API void kddpc_experiment_free(kddpc_experiment* exp);
KDDPC_API kddpc_status kddpc_experiment_set_seed(kddpc_experiment* exp, uint64_t seed);
/* out_dir from the config file, or "" when unset. */
KDDPC_API const char* kddpc_experiment_config_out_dir(const kddpc_experiment* exp);
/* command: "verify" | "collect" | "track" | "sweep". */
KDDPC_API kddpc_status kddpc_experiment_run(kddpc_experiment* exp, const char* command,
                                            const char* out_dir, int jobs);
/* Text report of the last run; valid until the next run or free. */
KDDPC_API const char* kddpc_experiment_summary(const kddpc_experiment* exp);
KDDPC_API int kddpc_experiment_file_count(const kddpc_experiment* exp);
KDDPC_API const char* kddpc_experiment_file(const kddpc_experiment* exp, int index);

/* id: "slow_manifold" | "quartic_manifold" | "unicycle" */
KDDPC_API kddpc_status kddpc_system_create(const char* id, double dt, kddpc_system** out);
KDDPC_API void kddpc_system_free(kddpc_system* sys);
/* nx is 0 when the system has no exact embedding. */
KDDPC_API kddpc_status kddpc_system_dims(const kddpc_system* sys, int* nz, int* nu, int* nx);
KDDPC_API kddpc_status kddpc_system_step(const kddpc_system* sys, const double* z, const double* u,
                                         double* z_next);
KDDPC_API kddpc_status kddpc_system_lift(const kddpc_system* sys, const double* z, double* x);

/* Stationary Riccati solution; matrices column-major. A: n x n, B: n x m,
 * Q: n x n, R: m x m, P: n x n (out), K: m x n (out). */
KDDPC_API kddpc_status kddpc_solve_dare(int n, int m, const double* A, const double* B,
                                        const double* Q, const double* R, double* P, double* K);

#ifdef __cplusplus
}
#endif

#endif
