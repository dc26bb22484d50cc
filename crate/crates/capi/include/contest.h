#ifndef CONTEST_H
#define CONTEST_H

/* Generated by cbindgen from contest-capi; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible call.
 */
typedef enum ContestStatus {
  CONTEST_STATUS_OK = 0,
  CONTEST_STATUS_INVALID_ARGUMENT = 1,
  CONTEST_STATUS_PARSE_ERROR = 2,
  CONTEST_STATUS_NUMERIC_ERROR = 3,
  CONTEST_STATUS_TOO_LARGE = 4,
  CONTEST_STATUS_PANIC = 5,
} ContestStatus;

/**
 * An opaque prepared contest: workers, index tables, samplers.
 */
typedef struct ContestModel ContestModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *contest_last_error_message(void);

/**
 * Crate version as a static string; do not free.
 */
const char *contest_version_string(void);

/**
 * Build a model from a configuration document (the CLI's JSON schema).
 * Returns null on failure; inspect `status` and
 * [`contest_last_error_message`].
 *
 * # Safety
 * `config_json` must be a valid NUL-terminated UTF-8 string.
 */
struct ContestModel *contest_model_from_json(const char *config_json, enum ContestStatus *status);

/**
 * Release a model handle. Null is a no-op.
 *
 * # Safety
 * `model` must have come from [`contest_model_from_json`] and not have been
 * freed before.
 */
void contest_model_free(struct ContestModel *model);

/**
 * Number of workers in the model; 0 on a null handle.
 *
 * # Safety
 * `model` must be a live handle (or null).
 */
uint32_t contest_model_n_workers(const struct ContestModel *model);

/**
 * Release a string returned by this library. Null is a no-op.
 *
 * # Safety
 * `s` must have been returned by a contest-capi call and not freed before.
 */
void contest_string_free(char *s);

/**
 * Full index table of one worker, as JSON. Caller frees the string.
 *
 * # Safety
 * `model` must be a live handle; `status` null or writable.
 */
char *contest_index_table_json(const struct ContestModel *model,
                               uint32_t worker,
                               enum ContestStatus *status);

/**
 * Exact principal value of the index contest (the envelope identity's
 * product-chain evaluation). NaN on failure.
 *
 * # Safety
 * `model` must be a live handle; `status` null or writable.
 */
double contest_envelope_value(const struct ContestModel *model, enum ContestStatus *status);

/**
 * Simulate the index contest and return the summary JSON the CLI writes.
 * Caller frees the string.
 *
 * # Safety
 * `model` must be a live handle; `status` null or writable.
 */
char *contest_simulate_summary_json(const struct ContestModel *model,
                                    uint64_t replications,
                                    uint64_t seed,
                                    enum ContestStatus *status);

/**
 * Trial length from the ladder display `λc∫₀^t e^{-(r+λ)s}ds = g`.
 * NaN (with a status) when the prize is too large to ever bind.
 *
 * # Safety
 * `status` must be null or writable.
 */
double contest_tbar(double lam, double c, double g, double r, enum ContestStatus *status);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CONTEST_H */
