#ifndef CFM_H
#define CFM_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum CfmStatus {
  CFM_STATUS_OK = 0,
  CFM_STATUS_NULL_POINTER = 1,
  CFM_STATUS_INVALID_ARGUMENT = 2,
  CFM_STATUS_SHAPE = 3,
  CFM_STATUS_FORMAT = 4,
  CFM_STATUS_IO = 5,
  CFM_STATUS_UNDEFINED = 6,
  CFM_STATUS_NUMERIC = 7,
  CFM_STATUS_PANIC = 8,
} CfmStatus;

/**
 * Kind of a calibrated threshold.
 */
typedef enum CfmThresholdKind {
  /**
   * Flag pixels with `score >= value`.
   */
  CFM_THRESHOLD_KIND_AT = 0,
  /**
   * Nothing is flagged.
   */
  CFM_THRESHOLD_KIND_UNCONSTRAINED = 1,
  /**
   * Everything is flagged.
   */
  CFM_THRESHOLD_KIND_REJECT_ALL = 2,
} CfmThresholdKind;

/**
 * Opaque error-network parameters.
 */
typedef struct CfmErrNet CfmErrNet;

typedef struct CfmThreshold {
  enum CfmThresholdKind kind;
  /**
   * Meaningful only for `At`.
   */
  double value;
} CfmThreshold;

/**
 * Architecture of a loaded network.
 */
typedef struct CfmErrNetInfo {
  uint32_t n_blocks;
  uint32_t width;
  uint32_t in_channels;
  uint32_t scale;
} CfmErrNetInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *cfm_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *cfm_version(void);

/**
 * Largest admissible number of calibration false negatives for `n_positives`.
 *
 * # Safety
 * `out` must be NULL or point to writable memory.
 */
enum CfmStatus cfm_max_false_negatives(double alpha, uint64_t n_positives, uint64_t *out_k);

/**
 * Calibrates from pooled per-pixel scores and binary oracle labels (1 = failure).
 *
 * # Safety
 * `scores` and `labels` must each point to `n` readable elements.
 */
enum CfmStatus cfm_calibrate(const float *scores,
                             const uint8_t *labels,
                             size_t n,
                             double alpha,
                             struct CfmThreshold *out_threshold);

/**
 * Writes `1` where the threshold flags the score, else `0`.
 *
 * # Safety
 * `scores` must hold `n` readable and `out_mask` `n` writable elements.
 */
enum CfmStatus cfm_apply_mask(const float *scores,
                              size_t n,
                              struct CfmThreshold threshold,
                              uint8_t *out_mask);

/**
 * Pooled false-negative rate of `predicted` against `oracle`.
 *
 * # Safety
 * Both arrays must hold `n` readable elements.
 */
enum CfmStatus cfm_fnr(const uint8_t *oracle, const uint8_t *predicted, size_t n, double *out_rate);

/**
 * Exact AUROC with tie correction; positives are label 1.
 *
 * # Safety
 * `scores` and `labels` must each hold `n` readable elements.
 */
enum CfmStatus cfm_auroc(const double *scores, const uint8_t *labels, size_t n, double *out_auroc);

/**
 * False-positive rate at 95% true-positive rate.
 *
 * # Safety
 * `scores` and `labels` must each hold `n` readable elements.
 */
enum CfmStatus cfm_fpr95(const double *scores, const uint8_t *labels, size_t n, double *out_fpr);

/**
 * Loads an error-network container from a file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out_handle` must be writable.
 */
enum CfmStatus cfm_errnet_load(const char *path, struct CfmErrNet **out_handle);

/**
 * Decodes an error-network container held in memory.
 *
 * # Safety
 * `bytes` must hold `len` readable bytes; `out_handle` must be writable.
 */
enum CfmStatus cfm_errnet_from_bytes(const uint8_t *bytes,
                                     size_t len,
                                     struct CfmErrNet **out_handle);

/**
 * Releases a handle. NULL is ignored.
 *
 * # Safety
 * `handle` must come from a `cfm_errnet_*` constructor and not be used afterwards.
 */
void cfm_errnet_free(struct CfmErrNet *handle);

/**
 * # Safety
 * `handle` must be a live handle; `out_info` must be writable.
 */
enum CfmStatus cfm_errnet_info(const struct CfmErrNet *handle, struct CfmErrNetInfo *out_info);

/**
 * Predicts the HR error-score map from LR features laid out `[h][w][channels]`.
 * `out_scores` receives `(scale*h) * (scale*w)` values, row-major.
 *
 * # Safety
 * `features` must hold `h * w * channels` readable values and `out_scores`
 * `out_len` writable ones; `handle` must be live.
 */
enum CfmStatus cfm_errnet_predict(const struct CfmErrNet *handle,
                                  const float *features,
                                  size_t h,
                                  size_t w,
                                  size_t channels,
                                  float *out_scores,
                                  size_t out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CFM_H */
