/* C interface to the sensitivity-driven experimental design toolkit.
 *
 * All functions return SDOED_OK (0) on success or an error code; the message
 * for the most recent failure on a run handle is available through
 * sdoed_last_error(). Handles are not thread-safe; use one per thread.
 */
#ifndef SDOED_H
#define SDOED_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef struct sdoed_run sdoed_run;

enum {
  SDOED_OK = 0,
  SDOED_ERR_INVALID_ARGUMENT = 1,
  SDOED_ERR_CONFIG = 2,
  SDOED_ERR_NONCONVERGENCE = 3,
  SDOED_ERR_EVALUATION = 4,
  SDOED_ERR_CAPACITY = 5,
  SDOED_ERR_IO = 6,
  SDOED_ERR_INTERNAL = 7
};

/* Load a configuration file and prepare an output directory. */
int sdoed_run_create(const char* config_path, const char* out_dir, sdoed_run** out);
void sdoed_run_destroy(sdoed_run* run);

/* Override the configured RNG seed (required for randomized studies when the
 * config does not set one). */
int sdoed_run_set_seed(sdoed_run* run, uint64_t seed);

/* Execute one stage: "plan", "hdsa", "design", "update", "simulate", or
 * "workflow" (all of them). Stages read earlier artifacts from the output
 * directory when they did not run in this process. */
int sdoed_run_stage(sdoed_run* run, const char* stage);

/* Random-design comparison study; non-positive counts use the configured
 * values. Writes compare.csv. */
int sdoed_run_compare(sdoed_run* run, int n_designs, int n_truth_models);

/* JSON summary of everything computed so far. The string is heap-allocated;
 * release it with sdoed_string_free. */
int sdoed_run_summary(sdoed_run* run, char** out_json);
void sdoed_string_free(char* s);

/* Message for the most recent error on this handle (empty string if none). */
const char* sdoed_last_error(const sdoed_run* run);

const char* sdoed_version(void);

#ifdef __cplusplus
}
#endif

#endif
