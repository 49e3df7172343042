#ifndef TRAJRANK_H
#define TRAJRANK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. Zero is success.
 */
typedef enum TrStatus {
  TR_STATUS_OK = 0,
  TR_STATUS_NULL_POINTER = 1,
  TR_STATUS_INVALID_ARGUMENT = 2,
  TR_STATUS_LENGTH_MISMATCH = 3,
  TR_STATUS_CONFIG = 4,
  TR_STATUS_LINEAGE = 5,
  TR_STATUS_DIVERGENCE = 6,
  TR_STATUS_IO = 7,
  TR_STATUS_PARSE = 8,
  TR_STATUS_PANIC = 99,
} TrStatus;

/**
 * Opaque handle to a cluster space.
 */
typedef struct TrClusterSpace TrClusterSpace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *trajrank_version(void);

/**
 * Length in bytes of the calling thread's last error message (without NUL).
 */
size_t trajrank_last_error_length(void);

/**
 * Copies the last error message into `buf` (NUL-terminated, truncated to
 * `len - 1` bytes). Returns the full message length.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t trajrank_last_error_message(char *buf, size_t len);

/**
 * Parses a cluster space from its JSON artifact.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum TrStatus trajrank_cluster_space_from_json(const char *json, struct TrClusterSpace **out);

/**
 * Clusters `n` full displacement series of `steps` steps each with k-Means.
 * `data` holds `n * steps * 2` doubles; the first `t_obs` steps of each
 * series are the observed part.
 *
 * # Safety
 * `data` must hold `n * steps * 2` readable doubles; `out` must be writable.
 */
enum TrStatus trajrank_kmeans(const double *data,
                              size_t n,
                              size_t steps,
                              size_t t_obs,
                              size_t k,
                              uint64_t seed,
                              struct TrClusterSpace **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `space` must be null or a handle from this library not yet freed.
 */
void trajrank_cluster_space_free(struct TrClusterSpace *space);

/**
 * Number of clusters, or 0 for a null handle.
 *
 * # Safety
 * `space` must be null or a live handle.
 */
size_t trajrank_cluster_space_k(const struct TrClusterSpace *space);

/**
 * Predicted steps per series, or 0 for a null handle.
 *
 * # Safety
 * `space` must be null or a live handle.
 */
size_t trajrank_cluster_space_t_pred(const struct TrClusterSpace *space);

/**
 * Nearest cluster of a full displacement series of `steps` steps.
 *
 * # Safety
 * `space` must be a live handle; `series` must hold `steps * 2` doubles.
 */
enum TrStatus trajrank_assign(const struct TrClusterSpace *space,
                              const double *series,
                              size_t steps,
                              size_t *out_cluster);

/**
 * Centroid ranking of `k` proposals, proposal `i` conditioned on cluster `i`.
 * `futures` holds `k * t_pred * 2` doubles; `probs_out` receives `k`.
 *
 * # Safety
 * Pointers must reference buffers of the stated sizes.
 */
enum TrStatus trajrank_rank_centroids(const struct TrClusterSpace *space,
                                      const double *futures,
                                      size_t k,
                                      size_t t_pred,
                                      double tau,
                                      double *probs_out);

/**
 * Softmax over inverse distances with temperature `tau`.
 *
 * # Safety
 * `m` and `out` must hold `n` doubles.
 */
enum TrStatus trajrank_inverse_distance_softmax(const double *m, size_t n, double tau, double *out);

/**
 * Constant-velocity forecast from `t_obs` observed displacements; writes
 * `t_pred * 2` doubles.
 *
 * # Safety
 * `observed` must hold `t_obs * 2` doubles and `out` `t_pred * 2`.
 */
enum TrStatus trajrank_cvm_predict(const double *observed,
                                   size_t t_obs,
                                   size_t t_pred,
                                   double sigma,
                                   double *out);

/**
 * Soft-DTW between two 2D step sequences of `n` and `m` steps.
 *
 * # Safety
 * `a` must hold `n * 2` doubles, `b` `m * 2`; `out` must be writable.
 */
enum TrStatus trajrank_soft_dtw(const double *a,
                                size_t n,
                                const double *b,
                                size_t m,
                                double gamma,
                                double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TRAJRANK_H */
