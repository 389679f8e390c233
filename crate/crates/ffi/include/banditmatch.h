#ifndef BANDITMATCH_H
#define BANDITMATCH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum BmStatus {
  BM_STATUS_OK = 0,
  BM_STATUS_NULL_POINTER = 1,
  BM_STATUS_INVALID_ARGUMENT = 2,
  BM_STATUS_MISSING_FILE = 3,
  BM_STATUS_VERSION_MISMATCH = 4,
  BM_STATUS_PARSE_ERROR = 5,
  BM_STATUS_IO_ERROR = 6,
  BM_STATUS_DIMENSION_MISMATCH = 7,
  BM_STATUS_CONFIG_ERROR = 8,
  BM_STATUS_NUMERIC_ERROR = 9,
  BM_STATUS_PANIC = 10,
} BmStatus;

/**
 * Opaque policy network.
 */
typedef struct BmPolicy BmPolicy;

/**
 * Opaque dialog world.
 */
typedef struct BmWorld BmWorld;

/**
 * Means over evaluation runs.
 */
typedef struct BmMetrics {
  double turns;
  double matched;
  double inform_recall;
  double inform_f1;
  double success_pct;
} BmMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failing call on this thread, or null. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *bm_last_error(void);

/**
 * Default world generated from `seed`.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum BmStatus bm_world_generate(uint64_t seed, struct BmWorld **out);

/**
 * Load a world schema file.
 *
 * # Safety
 * `path` must be a nul-terminated string and `out` writable.
 */
enum BmStatus bm_world_load(const char *path, struct BmWorld **out);

/**
 * Number of atomic actions, or 0 for a null handle.
 *
 * # Safety
 * `world` must be null or a live handle.
 */
size_t bm_world_num_actions(const struct BmWorld *world);

/**
 * State vector length, or 0 for a null handle.
 *
 * # Safety
 * `world` must be null or a live handle.
 */
size_t bm_world_state_dim(const struct BmWorld *world);

/**
 * # Safety
 * `world` must be null or a handle not yet freed.
 */
void bm_world_free(struct BmWorld *world);

/**
 * Load a policy checkpoint.
 *
 * # Safety
 * `path` must be a nul-terminated string and `out` writable.
 */
enum BmStatus bm_policy_load(const char *path, struct BmPolicy **out);

/**
 * # Safety
 * `policy` must be null or a live handle.
 */
size_t bm_policy_num_actions(const struct BmPolicy *policy);

/**
 * # Safety
 * `policy` must be null or a live handle.
 */
size_t bm_policy_state_dim(const struct BmPolicy *policy);

/**
 * # Safety
 * `policy` must be null or a handle not yet freed.
 */
void bm_policy_free(struct BmPolicy *policy);

/**
 * Per-action probabilities for one state.
 *
 * # Safety
 * `state` must hold `state_len` values and `out` room for `out_len`.
 */
enum BmStatus bm_policy_probs(const struct BmPolicy *policy,
                              const double *state,
                              size_t state_len,
                              double *out,
                              size_t out_len);

/**
 * Predicted action set as a 0/1 mask (probability above one half).
 *
 * # Safety
 * `state` must hold `state_len` values and `mask` room for `mask_len`.
 */
enum BmStatus bm_policy_predict(const struct BmPolicy *policy,
                                const double *state,
                                size_t state_len,
                                uint8_t *mask,
                                size_t mask_len);

/**
 * Roll the policy out against the simulated user with default goals.
 *
 * # Safety
 * Handles must be live and `out` writable.
 */
enum BmStatus bm_evaluate(const struct BmPolicy *policy,
                          const struct BmWorld *world,
                          size_t n_dialogs,
                          size_t n_runs,
                          uint64_t seed,
                          struct BmMetrics *out);

/**
 * Feedback for a predicted set against the expert set, both as 0/1 masks:
 * 1 when the sets are equal, else 0.
 *
 * # Safety
 * Both masks must hold `len` bytes and `out` be writable.
 */
enum BmStatus bm_simulate_feedback(const uint8_t *predicted,
                                   const uint8_t *truth,
                                   size_t len,
                                   uint8_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BANDITMATCH_H */
