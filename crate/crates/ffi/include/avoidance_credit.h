#ifndef AVOIDANCE_CREDIT_H
#define AVOIDANCE_CREDIT_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  AC_CONTROLLER_AUCTION = 0,
  AC_CONTROLLER_QP = 1,
} AcController;

typedef enum {
  AC_STATUS_OK = 0,
  AC_STATUS_NULL_POINTER = 1,
  AC_STATUS_INVALID_UTF8 = 2,
  AC_STATUS_CONFIG = 3,
  AC_STATUS_INVALID_ARGUMENT = 4,
  AC_STATUS_SIMULATION = 5,
  AC_STATUS_IO = 6,
  AC_STATUS_BUFFER_TOO_SMALL = 7,
  AC_STATUS_PANIC = 8,
} AcStatus;

/**
 * Opaque handle to a finished run.
 */
typedef struct AcRun AcRun;

/**
 * Opaque scenario handle.
 */
typedef struct AcScenario AcScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. The pointer is
 * valid until the next call into this library on the same thread.
 */
const char *ac_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ac_version(void);

/**
 * Parse a scenario from TOML text.
 *
 * # Safety
 * `text` must be a valid NUL-terminated string and `out` a valid pointer.
 */
AcStatus ac_scenario_from_str(const char *text, AcScenario **out);

/**
 * Load a scenario file.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string and `out` a valid pointer.
 */
AcStatus ac_scenario_from_file(const char *path, AcScenario **out);

/**
 * The built-in four-agent crossing scenario.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
AcStatus ac_scenario_crossing(AcScenario **out);

/**
 * # Safety
 * `scenario` must be a live handle from this library.
 */
AcStatus ac_scenario_set_controller(AcScenario *scenario, AcController controller);

/**
 * Number of agents, or 0 for a null handle.
 *
 * # Safety
 * `scenario` must be null or a live handle from this library.
 */
size_t ac_scenario_agent_count(const AcScenario *scenario);

/**
 * # Safety
 * `scenario` must be null or a handle from this library not yet freed.
 */
void ac_scenario_free(AcScenario *scenario);

/**
 * Simulate a scenario.
 *
 * # Safety
 * `scenario` must be a live handle and `out` a valid pointer.
 */
AcStatus ac_run(const AcScenario *scenario, AcRun **out);

/**
 * # Safety
 * `run` must be null or a live handle from this library.
 */
size_t ac_run_step_count(const AcRun *run);

/**
 * # Safety
 * `run` must be null or a live handle from this library.
 */
size_t ac_run_event_count(const AcRun *run);

/**
 * Minimum pairwise distance over the run, NaN for a null handle.
 *
 * # Safety
 * `run` must be null or a live handle from this library.
 */
double ac_run_min_distance(const AcRun *run);

/**
 * Copy per-agent cumulative effort into `out[0..len)`. `written`, if not
 * null, receives the number of values required.
 *
 * # Safety
 * `run` must be a live handle and `out` must point to `len` writable doubles.
 */
AcStatus ac_run_effort(const AcRun *run, double *out, size_t len, size_t *written);

/**
 * Copy the credits of event `index` into `out[0..len)`. Credits follow the
 * order of the event's participants, which are reported through
 * `agents_out` (0-based) when it is not null.
 *
 * # Safety
 * `run` must be a live handle; `out` must point to `len` writable doubles and
 * `agents_out`, when not null, to `len` writable `size_t`s.
 */
AcStatus ac_run_event_credits(const AcRun *run,
                              size_t index,
                              double *out,
                              size_t *agents_out,
                              size_t len,
                              size_t *written);

/**
 * Write trajectory.csv, events.json, summary.json and manifest.json into
 * `dir`.
 *
 * # Safety
 * `run` must be a live handle and `dir` a valid NUL-terminated string.
 */
AcStatus ac_run_write(const AcRun *run, const char *dir);

/**
 * # Safety
 * `run` must be null or a handle from this library not yet freed.
 */
void ac_run_free(AcRun *run);

/**
 * Standalone auction over `count` bidders with bases `alpha[i]` and
 * encounter counts `n[i]`. Credits and payments are written to arrays of
 * length `count`; `iterations` and `converged` may be null.
 *
 * # Safety
 * `alpha`, `n`, `credits` and `payments` must each point to `count` valid
 * elements.
 */
AcStatus ac_auction(const double *alpha,
                    const uint32_t *n,
                    size_t count,
                    double gamma,
                    double k,
                    double eps,
                    double grid_step,
                    size_t max_rounds,
                    double *credits,
                    double *payments,
                    size_t *iterations,
                    bool *converged);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AVOIDANCE_CREDIT_H */
