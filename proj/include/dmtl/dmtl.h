/* dmtl - distributed multi-task learning with a shared low-rank subspace.
 *
 * C interface of the shared library. All functions return a dmtl_status;
 * on failure dmtl_last_error() describes the problem (thread-local, valid
 * until the next dmtl call on the same thread). Handles are opaque and
 * must be released with the matching _free function.
 */
#ifndef DMTL_H
#define DMTL_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dmtl_status {
  DMTL_OK = 0,
  DMTL_ERR_INTERNAL = 1,
  DMTL_ERR_CONFIG = 2,   /* invalid configuration or malformed input */
  DMTL_ERR_DIVERGED = 3, /* at least one solver run diverged */
  DMTL_ERR_IO = 4
} dmtl_status;

typedef struct dmtl_dataset dmtl_dataset;
typedef struct dmtl_solution dmtl_solution;

const char* dmtl_status_name(dmtl_status status);
const char* dmtl_last_error(void);

/* Generates a synthetic instance. config_json: {"n":..,"p":..,"m":..,
 * "r":..,"task":"regression"|"classification","corr_decay":..,"seed":..}. */
dmtl_status dmtl_generate(const char* config_json, dmtl_dataset** out);

/* Loads/saves the dataset directory format (task_<j>.csv + meta.json,
 * optional wstar.csv/utrue.csv/sigma.csv). */
dmtl_status dmtl_dataset_load(const char* dir, dmtl_dataset** out);
dmtl_status dmtl_dataset_save(const dmtl_dataset* ds, const char* dir);
void dmtl_dataset_free(dmtl_dataset* ds);

/* p = feature dimension, m = number of tasks. */
dmtl_status dmtl_dataset_dims(const dmtl_dataset* ds, int32_t* p, int32_t* m);
/* Sample count of task j (0-based). */
dmtl_status dmtl_dataset_task_rows(const dmtl_dataset* ds, int32_t j, int32_t* n);

/* Runs one solver on the dataset. solver_json: {"name":"dgsp", ...}
 * with the same keys as experiment-spec solver entries. */
dmtl_status dmtl_solve(const dmtl_dataset* ds, const char* solver_json,
                       dmtl_solution** out);
dmtl_status dmtl_solution_dims(const dmtl_solution* sol, int32_t* p, int32_t* m);
/* Copies the p x m predictor matrix, column-major. */
dmtl_status dmtl_solution_predictor(const dmtl_solution* sol, double* buffer);
/* Rounds executed and cumulative vectors communicated per worker. */
dmtl_status dmtl_solution_rounds(const dmtl_solution* sol, int64_t* rounds);
dmtl_status dmtl_solution_vectors_per_worker(const dmtl_solution* sol, int64_t* vectors);
const char* dmtl_solution_status(const dmtl_solution* sol);
dmtl_status dmtl_solution_write_trace(const dmtl_solution* sol, const char* csv_path);
void dmtl_solution_free(dmtl_solution* sol);

/* Runs a full experiment spec (JSON text or file) and writes one trace
 * CSV per (solver, seed) cell into out_dir. Returns DMTL_ERR_DIVERGED
 * when at least one cell diverged (traces are still written). */
dmtl_status dmtl_run(const char* spec_json, const char* out_dir);
dmtl_status dmtl_run_file(const char* spec_path, const char* out_dir);

/* Aggregates the trace files of a run directory into one CSV, with
 * optional rounds-to-epsilon columns. */
dmtl_status dmtl_summarize(const char* in_dir, const char* out_csv,
                           const double* epsilons, int32_t n_epsilons);

#ifdef __cplusplus
}
#endif

#endif /* DMTL_H */
