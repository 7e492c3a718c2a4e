#ifndef AMPNET_AMPNET_H
#define AMPNET_AMPNET_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define AMPNET_API __declspec(dllexport)
#else
#define AMPNET_API __attribute__((visibility("default")))
#endif

typedef enum ampnet_status {
  AMPNET_OK = 0,
  AMPNET_ERR_INVALID_ARGUMENT = 1,
  AMPNET_ERR_CONFIG = 2,
  AMPNET_ERR_IO = 3,
  AMPNET_ERR_GRAPH = 4,
  AMPNET_ERR_DATASET = 5,
  AMPNET_ERR_EXECUTION = 6,
  AMPNET_ERR_DEADLOCK = 7,
  AMPNET_ERR_INTERNAL = 8
} ampnet_status;

/* Opaque handles. */
typedef struct ampnet_config ampnet_config;
typedef struct ampnet_session ampnet_session;

/* Message of the last failed call on this thread; "" if none. */
AMPNET_API const char* ampnet_last_error(void);
AMPNET_API const char* ampnet_status_name(ampnet_status s);
AMPNET_API const char* ampnet_version(void);
/* sizeof the tensor element type: 8 for the double build, 4 for float. */
AMPNET_API int ampnet_scalar_bytes(void);

/* Strings returned through char** out-parameters are owned by the caller. */
AMPNET_API void ampnet_string_free(char* s);

/* ---- run configuration ---- */

AMPNET_API ampnet_status ampnet_config_load(const char* path, ampnet_config** out);
AMPNET_API ampnet_status ampnet_config_parse(const char* json, ampnet_config** out);
AMPNET_API void ampnet_config_free(ampnet_config* cfg);
/* Keys: "threads", "max_active_keys", "min_update_frequency", "replicas",
   "seed", "epochs". The result is revalidated. */
AMPNET_API ampnet_status ampnet_config_set_int(ampnet_config* cfg, const char* key, int64_t value);
/* Keys: "lr", "target_accuracy". */
AMPNET_API ampnet_status ampnet_config_set_double(ampnet_config* cfg, const char* key, double value);
AMPNET_API ampnet_status ampnet_config_to_json(const ampnet_config* cfg, char** out_json);

/* ---- commands ---- */

/* Trains `repeat` times (seeds seed, seed+1, ...). Files go to out_dir
   (may be NULL). The JSON summary has per-run results and medians. */
AMPNET_API ampnet_status ampnet_train(const ampnet_config* cfg, const char* out_dir, int repeat, char** out_summary);

/* Finite-difference gradient check. *passed is 1 when every tensor is
   within tolerance. */
AMPNET_API ampnet_status ampnet_gradcheck(const ampnet_config* cfg, int* passed, char** out_report);

/* One training run per (mak, muf) cell; writes out_dir/sweep.csv. */
AMPNET_API ampnet_status ampnet_sweep(const ampnet_config* cfg, const int64_t* maks, size_t n_maks,
                                      const int64_t* mufs, size_t n_mufs, const char* out_dir, char** out_rows);

typedef struct ampnet_throughput_model {
  double hidden;
  double nodes;
  double edges;
  double edge_types;
  double steps;
  double device_flops;
  double overhead;
  double bits_per_scalar;
} ampnet_throughput_model;

typedef struct ampnet_throughput_estimate {
  double fwdop;
  double bwdop;
  double samples_per_s;
  double bandwidth_bits_per_s;
} ampnet_throughput_estimate;

AMPNET_API ampnet_status ampnet_estimate_throughput(const ampnet_throughput_model* model,
                                                    ampnet_throughput_estimate* out);

/* Parses a metrics or sweep CSV and returns a JSON summary. */
AMPNET_API ampnet_status ampnet_summarize(const char* csv_path, char** out_json);

/* Writes the "train" or "valid" split as JSON lines. */
AMPNET_API ampnet_status ampnet_export_dataset(const ampnet_config* cfg, const char* split, const char* path,
                                               size_t* out_count);

/* Validates a graph description; on failure *out_errors lists every problem. */
AMPNET_API ampnet_status ampnet_graph_validate(const char* graph_json, char** out_errors);

/* ---- step-wise training ---- */

typedef struct ampnet_epoch_stats {
  double mean_loss;
  double accuracy;
  double wall_s;
  double inst_per_s;
  double mean_staleness;
  int64_t instances;
  int64_t updates;
} ampnet_epoch_stats;

/* Builds the graph, loads the data and starts the worker threads. */
AMPNET_API ampnet_status ampnet_session_create(const ampnet_config* cfg, ampnet_session** out);
AMPNET_API ampnet_status ampnet_session_train_epoch(ampnet_session* s, ampnet_epoch_stats* out);
AMPNET_API ampnet_status ampnet_session_evaluate(ampnet_session* s, ampnet_epoch_stats* out);
AMPNET_API ampnet_status ampnet_session_weights(ampnet_session* s, char** out_json);
AMPNET_API void ampnet_session_free(ampnet_session* s);

#ifdef __cplusplus
}
#endif

#endif
