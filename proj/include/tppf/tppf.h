#ifndef TPPF_TPPF_H
#define TPPF_TPPF_H

/* C interface to the twisted particle filter library. Every function
 * returns a tppf_status; on failure tppf_last_error() describes it (the
 * text is thread-local and valid until the next call on that thread). */

#include <stddef.h>
#include <stdint.h>

#if defined(TPPF_BUILDING_LIBRARY)
#define TPPF_API __attribute__((visibility("default")))
#else
#define TPPF_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum tppf_status {
  TPPF_OK = 0,
  TPPF_ERR_INVALID_ARGUMENT = 1,
  TPPF_ERR_DEGENERATE = 2,
  TPPF_ERR_NUMERIC = 3,
  TPPF_ERR_IO = 4,
  TPPF_ERR_CONFIG = 5,
  TPPF_ERR_REJECTION_EXHAUSTED = 6,
  TPPF_ERR_RUNTIME = 7
} tppf_status;

typedef struct tppf_config tppf_config;
typedef struct tppf_dataset tppf_dataset;

/* Receives progress and verdict lines (no trailing newline). */
typedef void (*tppf_line_fn)(const char* line, void* user);

TPPF_API const char* tppf_version(void);
TPPF_API const char* tppf_last_error(void);
TPPF_API const char* tppf_status_name(tppf_status status);

/* Experiment configuration: a set of key = value settings on top of the
 * defaults. Keys are listed in README.md. */
TPPF_API tppf_status tppf_config_create(tppf_config** out);
TPPF_API void tppf_config_destroy(tppf_config* config);
TPPF_API tppf_status tppf_config_set(tppf_config* config, const char* key, const char* value);
TPPF_API tppf_status tppf_config_validate(const tppf_config* config);
/* Writes the 16 hex digit config hash plus a terminator; len >= 17. */
TPPF_API tppf_status tppf_config_hash(const tppf_config* config, char* buffer, size_t len);

/* Runs every configured method. summary_json may be NULL; otherwise it
 * receives a string to release with tppf_string_free. */
TPPF_API tppf_status tppf_run(const tppf_config* config, tppf_line_fn sink, void* user, char** summary_json);
/* Cartesian product over the dims / alphas grids. Failing cells are
 * recorded in the summary and do not stop the sweep. */
TPPF_API tppf_status tppf_sweep(const tppf_config* config, tppf_line_fn sink, void* user, char** summary_json);
/* Oracle suite; *failures receives the number of failing checks. */
TPPF_API tppf_status tppf_verify(tppf_line_fn sink, void* user, int* failures);
TPPF_API void tppf_string_free(char* text);

/* Observation records. */
TPPF_API tppf_status tppf_dataset_generate(const tppf_config* config, tppf_dataset** out);
TPPF_API tppf_status tppf_dataset_load(const char* path, tppf_dataset** out);
TPPF_API tppf_status tppf_dataset_save(const tppf_dataset* data, const char* path);
TPPF_API void tppf_dataset_destroy(tppf_dataset* data);
TPPF_API tppf_status tppf_dataset_info(const tppf_dataset* data, size_t* dim, size_t* horizon);

/* One bootstrap filter run on the dataset's model. */
TPPF_API tppf_status tppf_filter_bpf(const tppf_dataset* data, size_t particles, uint64_t seed, uint64_t replicate,
                                     double* log_z_hat, double* mean_ess_rel);
/* Exact log Z for linear Gaussian datasets. */
TPPF_API tppf_status tppf_kalman_log_z(const tppf_dataset* data, double* log_z);

#ifdef __cplusplus
}
#endif

#endif
