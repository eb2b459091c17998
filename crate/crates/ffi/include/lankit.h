#ifndef LANKIT_H
#define LANKIT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Noise distribution selector for [`LkSampleMaskConfig`].
 */
typedef enum LkNoiseKind {
  /**
   * Every component equals `noise_a`.
   */
  LK_NOISE_KIND_CONSTANT = 0,
  /**
   * Draws from the pool passed alongside the config.
   */
  LK_NOISE_KIND_BOOTSTRAP = 1,
  /**
   * Independent components in `[noise_a, noise_b)`.
   */
  LK_NOISE_KIND_UNIFORM = 2,
} LkNoiseKind;

/**
 * Status codes. 2, 3 and 4 match the command-line exit codes.
 */
typedef enum LkStatus {
  LK_STATUS_OK = 0,
  /**
   * Null pointer, bad UTF-8 or a buffer of the wrong length.
   */
  LK_STATUS_INVALID_ARGUMENT = 1,
  /**
   * Configuration, contract or shape error.
   */
  LK_STATUS_CONFIG = 2,
  /**
   * I/O or file-format error.
   */
  LK_STATUS_IO = 3,
  /**
   * Non-finite values or divergence.
   */
  LK_STATUS_NUMERIC = 4,
  LK_STATUS_PANIC = 5,
} LkStatus;

/**
 * A trained classifier checkpoint.
 */
typedef struct LkClassifier LkClassifier;

/**
 * A trained attention network.
 */
typedef struct LkLan LkLan;

/**
 * An attention mask with values in `[0,1]`.
 */
typedef struct LkMask LkMask;

typedef struct LkSampleMaskConfig {
  float beta;
  float learning_rate;
  uint64_t iterations;
  size_t noise_samples;
  uint64_t seed;
  enum LkNoiseKind noise_kind;
  float noise_a;
  float noise_b;
} LkSampleMaskConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next call into the library on the same thread.
 */
const char *lk_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *lk_version(void);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum LkStatus lk_classifier_load(const char *path, struct LkClassifier **out);

/**
 * # Safety
 * `h` must come from [`lk_classifier_load`] and not be used afterwards.
 */
void lk_classifier_free(struct LkClassifier *h);

/**
 * Number of input values, or 0 for a null handle.
 *
 * # Safety
 * `h` must be null or a live classifier handle.
 */
size_t lk_classifier_input_len(const struct LkClassifier *h);

/**
 * Number of classes, or 0 for a null handle.
 *
 * # Safety
 * `h` must be null or a live classifier handle.
 */
size_t lk_classifier_classes(const struct LkClassifier *h);

/**
 * Class probabilities for one input.
 *
 * # Safety
 * `input` must hold `input_len` floats and `probs` room for `probs_len`.
 */
enum LkStatus lk_classifier_predict(const struct LkClassifier *h,
                                    const float *input,
                                    size_t input_len,
                                    float *probs,
                                    size_t probs_len);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum LkStatus lk_lan_load(const char *path, struct LkLan **out);

/**
 * # Safety
 * `h` must come from [`lk_lan_load`] and not be used afterwards.
 */
void lk_lan_free(struct LkLan *h);

/**
 * Mask the attention network assigns to one input.
 *
 * # Safety
 * `input` must hold `input_len` floats and `out` be a writable pointer.
 */
enum LkStatus lk_lan_mask(const struct LkLan *h,
                          const float *input,
                          size_t input_len,
                          struct LkMask **out);

/**
 * Optimises a mask for one input against `classifier`. Bootstrap noise
 * draws from `pool`, `pool_count` inputs stored back to back; other noise
 * kinds accept a null pool.
 *
 * # Safety
 * Buffers must hold the stated number of floats and `out` be writable.
 */
enum LkStatus lk_sample_mask(const struct LkClassifier *classifier,
                             const float *input,
                             size_t input_len,
                             const float *pool,
                             size_t pool_count,
                             const struct LkSampleMaskConfig *config,
                             struct LkMask **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum LkStatus lk_mask_load(const char *path, struct LkMask **out);

/**
 * # Safety
 * `h` must be a live mask handle and `path` a NUL-terminated string.
 */
enum LkStatus lk_mask_save(const struct LkMask *h, const char *path);

/**
 * # Safety
 * `h` must be null or come from a mask-producing call, and not be used
 * afterwards.
 */
void lk_mask_free(struct LkMask *h);

/**
 * Number of mask values, or 0 for a null handle.
 *
 * # Safety
 * `h` must be null or a live mask handle.
 */
size_t lk_mask_len(const struct LkMask *h);

/**
 * Mean mask value, or NaN for a null handle.
 *
 * # Safety
 * `h` must be null or a live mask handle.
 */
float lk_mask_mean(const struct LkMask *h);

/**
 * Copies the mask values, or with `importance` set, `1 - mask`.
 *
 * # Safety
 * `dst` must have room for `len` floats.
 */
enum LkStatus lk_mask_copy(const struct LkMask *h, bool importance, float *dst, size_t len);

/**
 * `mask * eta + (1 - mask) * x` into `dst`; all buffers have the mask's length.
 *
 * # Safety
 * Every buffer must hold `len` floats.
 */
enum LkStatus lk_corrupt(const struct LkMask *h,
                         const float *x,
                         const float *eta,
                         float *dst,
                         size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LANKIT_H */
