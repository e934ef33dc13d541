/*
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/* C interface to the gpufairq simulator and scheduler. Objects are opaque
 * handles owned by the caller and released with the matching _free call.
 * Every fallible call returns a gfq_status; on failure gfq_last_error()
 * describes the problem for the calling thread. */

#ifndef GPUFAIRQ_GPUFAIRQ_H_
#define GPUFAIRQ_GPUFAIRQ_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define GFQ_API __declspec(dllexport)
#else
#define GFQ_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum gfq_status {
  GFQ_OK = 0,
  GFQ_ERR_NULL_ARG = 1,
  GFQ_ERR_INVALID = 2,  /* bad configuration or argument value */
  GFQ_ERR_IO = 3,       /* unreadable or malformed input file, unwritable output */
  GFQ_ERR_UNKNOWN_KEY = 4,
  GFQ_ERR_BUFFER = 5,   /* output buffer too small */
  GFQ_ERR_INTERNAL = 6
} gfq_status;

typedef struct gfq_config gfq_config;
typedef struct gfq_result gfq_result;
typedef struct gfq_scheduler gfq_scheduler;

typedef struct gfq_summary {
  uint64_t invocations;
  double weighted_avg_latency_s;
  double p50_latency_s;
  double p99_latency_s;
  double cold_hit_pct;
  double mean_util;
  double makespan_s;
  uint64_t windows_compared;
  uint64_t bound_violations;
  uint64_t bound_violations_conservative;
  double max_gap_worst_window;
} gfq_summary;

GFQ_API const char* gfq_version(void);
GFQ_API const char* gfq_last_error(void);
GFQ_API const char* gfq_status_string(gfq_status s);

/* Configuration. Keys are "section.key" as in the config file. */
GFQ_API gfq_status gfq_config_new(gfq_config** out);
GFQ_API gfq_status gfq_config_load(const char* path, gfq_config** out);
GFQ_API gfq_status gfq_config_clone(const gfq_config* cfg, gfq_config** out);
GFQ_API gfq_status gfq_config_set(gfq_config* cfg, const char* key, const char* value);
/* Copies the value (NUL-terminated) into buf; *needed gets the required size
 * including the terminator when not NULL. */
GFQ_API gfq_status gfq_config_get(const gfq_config* cfg, const char* key, char* buf, size_t len,
                                  size_t* needed);
GFQ_API gfq_status gfq_config_validate(const gfq_config* cfg);
/* Generates the configured trace, writes it to path and points the config
 * at it, so several runs share identical arrivals. */
GFQ_API gfq_status gfq_config_materialize_trace(gfq_config* cfg, const char* path);
GFQ_API void gfq_config_free(gfq_config* cfg);

GFQ_API size_t gfq_config_key_count(void);
GFQ_API const char* gfq_config_key_name(size_t i);
GFQ_API const char* gfq_config_key_help(size_t i);

/* Simulation. */
GFQ_API gfq_status gfq_run(const gfq_config* cfg, gfq_result** out);
GFQ_API gfq_status gfq_result_summary(const gfq_result* r, gfq_summary* out);
GFQ_API const char* gfq_result_policy(const gfq_result* r);
/* Writes invocations.csv, windows.csv and summary.json into out_dir. */
GFQ_API gfq_status gfq_result_export(const gfq_result* r, const char* out_dir);
GFQ_API void gfq_result_free(gfq_result* r);

/* Standalone Zipf trace generation. profiles_path may be NULL for the
 * built-in profiles. */
GFQ_API gfq_status gfq_generate_trace(uint32_t n_functions, double zipf_s, double rate_rps,
                                      double duration_s, uint64_t seed,
                                      const char* profiles_path, const char* out_path);

GFQ_API gfq_status gfq_fairness_bound(int D, double T, double tau_i, double tau_j, double w_i,
                                      double w_j, double* out);

/* Embeddable MQFQ-Sticky scheduler over d_max abstract device slots. The
 * host reports completions with the measured execution time. */
GFQ_API gfq_status gfq_scheduler_new(double T, int d_max, double alpha, double default_ttl_s,
                                     gfq_scheduler** out);
GFQ_API gfq_status gfq_scheduler_set_weight(gfq_scheduler* s, const char* function, double w);
GFQ_API gfq_status gfq_scheduler_enqueue(gfq_scheduler* s, const char* function, double now,
                                         uint64_t* id_out);
/* *dispatched is 1 when an invocation was released; its id and function are
 * returned through id_out and fn_buf. */
GFQ_API gfq_status gfq_scheduler_dispatch(gfq_scheduler* s, double now, int* dispatched,
                                          uint64_t* id_out, char* fn_buf, size_t fn_len);
GFQ_API gfq_status gfq_scheduler_complete(gfq_scheduler* s, uint64_t id, double exec_s,
                                          double now);
GFQ_API gfq_status gfq_scheduler_global_vt(const gfq_scheduler* s, double* out);
GFQ_API gfq_status gfq_scheduler_queue_vt(const gfq_scheduler* s, const char* function,
                                          double* out);
GFQ_API void gfq_scheduler_free(gfq_scheduler* s);

#ifdef __cplusplus
}
#endif

#endif /* GPUFAIRQ_GPUFAIRQ_H_ */
