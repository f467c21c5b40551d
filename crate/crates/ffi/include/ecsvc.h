#ifndef ECSVC_H
#define ECSVC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum EcsvcAttack {
  ECSVC_ATTACK_REPLAY = 0,
  ECSVC_ATTACK_TAMPER = 1,
  ECSVC_ATTACK_CURIOUS_SA = 2,
} EcsvcAttack;

typedef enum EcsvcError {
  ECSVC_ERROR_OK = 0,
  ECSVC_ERROR_NULL_POINTER = 1,
  ECSVC_ERROR_INVALID_UTF8 = 2,
  ECSVC_ERROR_CONFIG = 3,
  ECSVC_ERROR_PROTOCOL = 4,
  ECSVC_ERROR_STALL = 5,
  ECSVC_ERROR_IO = 6,
  ECSVC_ERROR_BUFFER_TOO_SMALL = 7,
  ECSVC_ERROR_PANIC = 8,
} EcsvcError;

/**
 * Outcome of a finished run, mirroring the CSV `status` column.
 */
typedef enum EcsvcRunStatus {
  ECSVC_RUN_STATUS_OK = 0,
  ECSVC_RUN_STATUS_ABORT = 1,
  ECSVC_RUN_STATUS_STALL = 2,
  ECSVC_RUN_STATUS_LEAK = 3,
  ECSVC_RUN_STATUS_REPLAY_REJECTED = 4,
  ECSVC_RUN_STATUS_TAMPER_REJECTED = 5,
  ECSVC_RUN_STATUS_SCAN_CLEAN = 6,
  ECSVC_RUN_STATUS_UNDETECTED = 7,
} EcsvcRunStatus;

/**
 * Result row of one run.
 */
typedef struct EcsvcResult EcsvcResult;

/**
 * Parsed scenario configuration.
 */
typedef struct EcsvcScenario EcsvcScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *ecsvc_version(void);

/**
 * Copies the last error message of this thread into `buf`.
 */
enum EcsvcError ecsvc_last_error(char *buf, size_t cap, size_t *needed);

/**
 * The default scenario: 32 attributes, one sender, ten receivers.
 */
enum EcsvcError ecsvc_scenario_default(struct EcsvcScenario **out);

/**
 * Parses a TOML scenario. `*out` is left untouched on failure.
 */
enum EcsvcError ecsvc_scenario_from_toml(const char *toml, struct EcsvcScenario **out);

/**
 * Sets a sweepable parameter: `data_rate`, `arb_rate`, `n_sys_att`,
 * `n_rx_att`, `n_rx_ecu`, `n_tx_ecu` or `sa_clock` (0.6 or 1.4).
 */
enum EcsvcError ecsvc_scenario_set_param(struct EcsvcScenario *scenario,
                                         const char *key,
                                         double value);

/**
 * Sets the RNG seed used for key generation and nonces.
 */
enum EcsvcError ecsvc_scenario_set_seed(struct EcsvcScenario *scenario, uint64_t seed);

/**
 * Serialises the scenario back to TOML.
 */
enum EcsvcError ecsvc_scenario_to_toml(const struct EcsvcScenario *scenario,
                                       char *buf,
                                       size_t cap,
                                       size_t *needed);

void ecsvc_scenario_free(struct EcsvcScenario *scenario);

/**
 * Runs one epoch of the scenario, or its configured attack.
 */
enum EcsvcError ecsvc_run(const struct EcsvcScenario *scenario, struct EcsvcResult **out);

/**
 * Runs `kind` against the scenario with `trials` trials.
 */
enum EcsvcError ecsvc_attack(const struct EcsvcScenario *scenario,
                             enum EcsvcAttack kind,
                             size_t trials,
                             struct EcsvcResult **out);

/**
 * Simulated seconds from the first to the last bus or compute event.
 */
double ecsvc_result_total_time_s(const struct EcsvcResult *result);

size_t ecsvc_result_frames(const struct EcsvcResult *result);

/**
 * Writes the run status to `*status`.
 */
enum EcsvcError ecsvc_result_status(const struct EcsvcResult *result, enum EcsvcRunStatus *status);

/**
 * The result as CSV: header line plus one row.
 */
enum EcsvcError ecsvc_result_csv(const struct EcsvcResult *result,
                                 char *buf,
                                 size_t cap,
                                 size_t *needed);

/**
 * The event trace as CSV, when the run produced one.
 */
enum EcsvcError ecsvc_result_trace_csv(const struct EcsvcResult *result,
                                       char *buf,
                                       size_t cap,
                                       size_t *needed);

void ecsvc_result_free(struct EcsvcResult *result);

/**
 * The worked toy-group example as text.
 */
enum EcsvcError ecsvc_demo(char *buf, size_t cap, size_t *needed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ECSVC_H */
