/* SPDX-License-Identifier: Apache-2.0 */
/*
 * C interface to the carboneval library.
 *
 * Objects are opaque handles created by *_load / *_builtin and released with
 * the matching *_free. Every fallible call returns a ce_status; on failure a
 * message for the calling thread is available from ce_last_error(). Strings
 * returned through char** outputs are heap allocated and must be released
 * with ce_string_free().
 */
#ifndef CARBONEVAL_CARBONEVAL_H
#define CARBONEVAL_CARBONEVAL_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(CARBONEVAL_BUILDING)
#    define CE_API __declspec(dllexport)
#  else
#    define CE_API __declspec(dllimport)
#  endif
#else
#  define CE_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ce_status {
  CE_OK = 0,
  CE_ERR_INVALID_ARGUMENT = 1,
  CE_ERR_DOMAIN = 2,
  CE_ERR_RANGE = 3,
  CE_ERR_UNKNOWN_DEVICE = 4,
  CE_ERR_UNKNOWN_REGION = 5,
  CE_ERR_PARSE = 6,
  CE_ERR_IO = 7,
  CE_ERR_CONVERGENCE = 8,
  CE_ERR_RANK_DEFICIENT = 9,
  CE_ERR_INTERNAL = 10
} ce_status;

typedef enum ce_format { CE_FORMAT_JSON = 0, CE_FORMAT_CSV = 1, CE_FORMAT_TABLE = 2 } ce_format;

typedef enum ce_alpha_mode {
  CE_ALPHA_MIDPOINT = 0,
  CE_ALPHA_INTERVAL = 1,
  CE_ALPHA_EXPLICIT = 2
} ce_alpha_mode;

typedef struct ce_device_db ce_device_db;
typedef struct ce_region_table ce_region_table;
typedef struct ce_alpha_stats ce_alpha_stats;

CE_API const char* ce_last_error(void);
CE_API const char* ce_status_name(ce_status status);
CE_API void ce_string_free(char* s);
CE_API const char* ce_version(void);

/* ---- solver settings ---------------------------------------------------- */

typedef struct ce_solver_options {
  double log10_alpha_min;
  double log10_alpha_max;
  int max_iterations;
} ce_solver_options;

CE_API void ce_solver_options_init(ce_solver_options* opts);

/* ---- numerical core (units: TFLOP, GPU-seconds) ------------------------ */

CE_API ce_status ce_throughput_at(double log10_alpha, double gpu_seconds, double* tflop_per_s);
CE_API ce_status ce_cumulative_compute(double log10_alpha, double gpu_seconds, double* tflop);
CE_API ce_status ce_solve_gpu_time(double tflop, double log10_alpha, const ce_solver_options* opts,
                                   double* gpu_seconds);
CE_API ce_status ce_calibrate_alpha(double tflop, double gpu_seconds, const ce_solver_options* opts,
                                    double* log10_alpha);
CE_API ce_status ce_operational_carbon(double watts, double gpu_hours, double g_per_kwh, double pue,
                                       double* energy_kwh, double* kg);
CE_API ce_status ce_embodied_from_rate(double gpu_hours, double g_per_gpuh, double* kg);
CE_API ce_status ce_relative_error(double predicted, double actual, double* percent);

/* ---- device and region databases --------------------------------------- */

CE_API ce_status ce_device_db_builtin(ce_device_db** out);
/* Overlays the JSON file at `path` on the built-in families. */
CE_API ce_status ce_device_db_load(const char* path, ce_device_db** out);
CE_API ce_status ce_device_db_save(const ce_device_db* db, const char* path);
CE_API void ce_device_db_free(ce_device_db* db);
CE_API size_t ce_device_db_size(const ce_device_db* db);
CE_API ce_status ce_device_db_normalize(const ce_device_db* db, const char* raw, char** family);

typedef struct ce_device_family {
  char key[32];
  double tdp_w;
  double peak_tflops;
  double alpha_log10_lo;
  double alpha_log10_hi;
  double beta_g_per_gpuh; /* NaN when unknown */
  double die_mm2;         /* NaN when unknown */
  int process_nm;         /* 0 when unknown */
  double lifetime_h;
} ce_device_family;

CE_API ce_status ce_device_db_get(const ce_device_db* db, const char* key, ce_device_family* out);

CE_API ce_status ce_region_table_load(const char* path, ce_region_table** out);
CE_API void ce_region_table_free(ce_region_table* table);
CE_API ce_status ce_region_intensity(const ce_region_table* table, const char* code,
                                     double* g_per_kwh);

/* Reads the statistics written by ce_calibrate_file. */
CE_API ce_status ce_alpha_stats_load(const char* path, ce_alpha_stats** out);
CE_API void ce_alpha_stats_free(ce_alpha_stats* stats);

/* ---- estimation --------------------------------------------------------- */

typedef struct ce_estimate_request {
  /* Compute: set total_flops, or params and data_size (NaN = unset). */
  double total_flops;
  double params;
  double data_size;
  double factor;
  const char* device;
  /* Intensity: region code (looked up in the region table) or a direct
   * value; exactly one must be set. */
  const char* region;
  double intensity_g_per_kwh;
  double pue;
  ce_alpha_mode alpha_mode;
  double log10_alpha; /* used in CE_ALPHA_EXPLICIT */
  double tdp_override_w;  /* NaN = family value */
  double beta_override_g_per_gpuh; /* NaN = family value */
} ce_estimate_request;

CE_API void ce_estimate_request_init(ce_estimate_request* req);

typedef struct ce_interval {
  double lo;
  double hi;
} ce_interval;

typedef struct ce_estimate_report {
  double gpu_hours;
  double energy_kwh;
  double operational_kg;
  double embodied_kg;
  double total_kg;
  int has_interval;
  ce_interval gpu_hours_interval;
  ce_interval energy_kwh_interval;
  ce_interval operational_interval_kg;
  ce_interval embodied_interval_kg;
  ce_interval total_interval_kg;
  ce_interval log10_alpha_interval;
  char family[32];
  double log10_alpha;
  double tdp_w;
  double beta_g_per_gpuh; /* NaN when the family has no embodied data */
  double intensity_g_per_kwh;
  double pue;
  double compute_flops;
} ce_estimate_report;

/* regions and stats may be NULL. */
CE_API ce_status ce_estimate(const ce_device_db* db, const ce_region_table* regions,
                             const ce_alpha_stats* stats, const ce_estimate_request* req,
                             const ce_solver_options* opts, ce_estimate_report* out);

/* model may be NULL; when set it is included in the JSON output. */
CE_API ce_status ce_estimate_report_format(const ce_estimate_report* report, const char* model,
                                           ce_format format, char** out);

/* Estimates every record of a records CSV (GPU-time columns optional) and
 * returns a JSON array of reports tagged with the model name. Rows that
 * cannot be estimated are listed in *warnings (may be NULL). */
CE_API ce_status ce_estimate_records_file(const ce_device_db* db, const ce_region_table* regions,
                                          const ce_alpha_stats* stats, const char* records_path,
                                          ce_alpha_mode mode, const ce_solver_options* opts,
                                          char** json_out, char** warnings);

/* ---- batch operations over files ---------------------------------------- */

/* Calibration JSON (per-family statistics, per-record fits, rejections). */
CE_API ce_status ce_calibrate_file(const ce_device_db* db, const char* records_path,
                                   const ce_solver_options* opts, char** json_out);

typedef struct ce_baseline_config {
  int degree;
  int max_depth;
  int min_leaf;
  double epsilon;
  double c;
  int iterations;
  uint64_t seed;
  int per_record_alpha;
} ce_baseline_config;

CE_API void ce_baseline_config_init(ce_baseline_config* config);

CE_API ce_status ce_compare_files(const ce_device_db* db, const ce_region_table* regions,
                                  const char* train_path, const char* eval_path,
                                  const ce_baseline_config* config, const ce_solver_options* opts,
                                  ce_format format, char** out, char** warnings);

CE_API ce_status ce_validate_files(const ce_device_db* db, const ce_region_table* regions,
                                   const char* records_path, const char* fixtures_path,
                                   const ce_solver_options* opts, ce_format format, char** out);

/* Scatter CSV `model,total_tco2,metric_name,metric_value`. */
CE_API ce_status ce_scaling_report_files(const char* records_path, const char* estimates_path,
                                         char** csv_out, char** warnings);

#ifdef __cplusplus
}
#endif

#endif /* CARBONEVAL_CARBONEVAL_H */
