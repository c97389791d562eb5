#ifndef VALLA_H
#define VALLA_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. Zero is success.
 */
typedef enum VallaStatus {
  VALLA_STATUS_OK = 0,
  VALLA_STATUS_NULL_POINTER = 1,
  VALLA_STATUS_INVALID_ARGUMENT = 2,
  VALLA_STATUS_DIMENSION_MISMATCH = 3,
  VALLA_STATUS_NOT_POSITIVE_DEFINITE = 4,
  VALLA_STATUS_NON_FINITE = 5,
  VALLA_STATUS_CAP_EXCEEDED = 6,
  VALLA_STATUS_FORMAT = 7,
  VALLA_STATUS_VERSION_MISMATCH = 8,
  VALLA_STATUS_IO = 9,
  VALLA_STATUS_CONFIG = 10,
  VALLA_STATUS_PANIC = 11,
  VALLA_STATUS_OTHER = 12,
} VallaStatus;

/**
 * A MAP network loaded from a checkpoint.
 */
typedef struct VallaNetwork VallaNetwork;

/**
 * A fitted posterior state (any method) with its data normalization.
 */
typedef struct VallaPosterior VallaPosterior;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated, truncated to
 * `capacity`). Returns the full message length excluding the terminator.
 *
 * # Safety
 * `buf` must be null or point to `capacity` writable bytes.
 */
size_t valla_last_error(char *buf, size_t capacity);

/**
 * Loads a MAP checkpoint.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum VallaStatus valla_network_load(const char *path, struct VallaNetwork **out);

/**
 * # Safety
 * `net` must be null or a handle from [`valla_network_load`] not yet freed.
 */
void valla_network_free(struct VallaNetwork *net);

/**
 * Input and output dimensions; zero for a null handle.
 *
 * # Safety
 * `net` must be null or a live handle.
 */
void valla_network_dims(const struct VallaNetwork *net, size_t *input_dim, size_t *output_dim);

/**
 * Network outputs for `n` row-major inputs of width `d`, written row-major to `out`
 * (`n·C` values, `out_len` capacity).
 *
 * # Safety
 * `x` must hold `n·d` values and `out` `out_len` writable values.
 */
enum VallaStatus valla_network_predict(const struct VallaNetwork *net,
                                       const double *x,
                                       size_t n,
                                       size_t d,
                                       double *out,
                                       size_t out_len);

/**
 * Loads a fitted posterior state written by `valla fit`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum VallaStatus valla_posterior_load(const char *path, struct VallaPosterior **out);

/**
 * # Safety
 * `post` must be null or a handle from [`valla_posterior_load`] not yet freed.
 */
void valla_posterior_free(struct VallaPosterior *post);

/**
 * Input and output dimensions; zero for a null handle.
 *
 * # Safety
 * `post` must be null or a live handle.
 */
void valla_posterior_dims(const struct VallaPosterior *post, size_t *input_dim, size_t *output_dim);

/**
 * Predictive in raw data units: `mean` gets `n·C` values (row-major), `cov` gets the `n`
 * per-point `C × C` function-space covariance blocks (`n·C·C` values). `noise_variance`, if
 * not null, receives σ² (zero for classification). `cov` may be null to skip it.
 *
 * # Safety
 * `x` must hold `n·d` values; `mean` and `cov` must hold `mean_len` and `cov_len` writable values.
 */
enum VallaStatus valla_posterior_predict(const struct VallaPosterior *post,
                                         const double *x,
                                         size_t n,
                                         size_t d,
                                         double *mean,
                                         size_t mean_len,
                                         double *cov,
                                         size_t cov_len,
                                         double *noise_variance);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VALLA_H */
