/* C API for the deer instruction-prefetch analysis toolkit.
 *
 * All functions return deer_status; failures leave a message retrievable via
 * deer_last_error() (thread local). Out-parameters are written only on
 * DEER_OK. Strings returned through char** are heap-allocated; release them
 * with deer_string_free(). Handles are opaque; each type has a _free().
 */
#ifndef DEER_H
#define DEER_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum deer_status {
  DEER_OK = 0,
  DEER_ERR_USAGE = 1,
  DEER_ERR_DATA = 2,
  DEER_ERR_IO = 3,
  DEER_ERR_INTERNAL = 4
} deer_status;

typedef struct deer_trace deer_trace;
typedef struct deer_analysis deer_analysis;
typedef struct deer_metadata deer_metadata;
typedef struct deer_report deer_report;

uint32_t deer_abi_version(void);
const char* deer_last_error(void);
void deer_string_free(char* s);

/* ---- traces ---- */

deer_status deer_trace_read(const char* path, deer_trace** out);
deer_status deer_trace_write(const deer_trace* t, const char* path);
/* Generates from a workload spec (TOML text). seed_override may be NULL.
 * truth_json_out may be NULL; otherwise receives the ground-truth companion. */
deer_status deer_trace_generate(const char* spec_toml, const uint64_t* seed_override,
                                deer_trace** out, char** truth_json_out);
deer_status deer_trace_info_json(const deer_trace* t, char** json_out);
deer_status deer_trace_slice(const deer_trace* t, uint64_t first, uint64_t count,
                             deer_trace** out);
uint64_t deer_trace_length(const deer_trace* t);
void deer_trace_free(deer_trace* t);

/* ---- analysis (CFG + hyperblocks) ---- */

typedef struct deer_analyze_params {
  double probability_threshold; /* default 0.8 */
  uint64_t mls_exec_floor;      /* default 2 */
} deer_analyze_params;
void deer_analyze_params_init(deer_analyze_params* p);

deer_status deer_analyze(const deer_trace* t, const deer_analyze_params* p, deer_analysis** out);
deer_status deer_analysis_cfg_json(const deer_analysis* a, char** json_out);
deer_status deer_analysis_hb_json(const deer_analysis* a, char** json_out);
void deer_analysis_free(deer_analysis* a);

/* ---- metadata ---- */

typedef struct deer_meta_params {
  uint32_t max_depth_hbs;           /* default 50 */
  uint32_t max_cachelines_per_entry; /* default 16, ceiling 48 */
  int containment_pruning;          /* default 1 */
  uint64_t hash_seed;
} deer_meta_params;
void deer_meta_params_init(deer_meta_params* p);

deer_status deer_metadata_build(const deer_trace* t, const deer_analysis* a,
                                const deer_meta_params* p, deer_metadata** out);
deer_status deer_metadata_save(const deer_metadata* m, const char* path);
deer_status deer_metadata_load(const char* path, deer_metadata** out);
deer_status deer_metadata_stats_json(const deer_metadata* m, char** json_out);
void deer_metadata_free(deer_metadata* m);

/* ---- simulation ---- */

typedef enum deer_mode {
  DEER_MODE_OFF = 0,
  DEER_MODE_SSRA = 1,
  DEER_MODE_DYNAMIC = 2,
  DEER_MODE_ORACLE = 3,
  DEER_MODE_RNR50 = 4,
  DEER_MODE_RNR_UNIQUE50 = 5
} deer_mode;

typedef struct deer_sim_params {
  deer_mode mode;
  /* cache */
  uint64_t l1i_bytes;
  uint32_t l1i_assoc;
  uint64_t l2_bytes;
  uint32_t l2_assoc;
  uint32_t line_size;
  uint32_t lat_l1, lat_l2, lat_dram;
  /* DRU */
  uint32_t ras_size;
  uint32_t prefetch_buffer_size;
  uint32_t metadata_load_latency;
  int ras_top_prefetch;
  uint32_t issue_bandwidth;
  uint32_t metadata_cache_entries;
  uint32_t runahead_depth;
  uint64_t oracle_distance;
  int rnr_uncapped; /* replay whole recordings instead of the last-n cap */
  /* accuracy metrics for the chosen predictor */
  int with_accuracy;
  uint32_t ssra_depth;  /* chain depth/last-n used for accuracy + rnr caps */
  uint32_t ssra_lastn;
  const char* label; /* may be NULL */
} deer_sim_params;
void deer_sim_params_init(deer_sim_params* p);

/* analysis is required for dynamic/rnr modes and for accuracy; metadata is
 * required for ssra mode. Unused handles may be NULL. */
deer_status deer_simulate(const deer_trace* t, const deer_analysis* a, const deer_metadata* m,
                          const deer_sim_params* p, deer_report** out);

deer_status deer_report_json(const deer_report* r, char** json_out);
deer_status deer_report_save(const deer_report* r, const char* path);
deer_status deer_report_load(const char* path, deer_report** out);
void deer_report_free(deer_report* r);

/* Baseline-first comparison across reports on one trace + cache config. */
deer_status deer_compare_csv(const deer_report* const* reports, size_t count, char** csv_out);
deer_status deer_compare_json(const deer_report* const* reports, size_t count, char** json_out);
deer_status deer_compare_svg(const deer_report* const* reports, size_t count, const char* path);

/* ---- experiments ---- */

deer_status deer_run_experiment(const char* recipe_path, const char* out_dir, uint32_t threads,
                                char** summary_json_out);

#ifdef __cplusplus
}
#endif

#endif /* DEER_H */
