#ifndef RADAR_NOWCAST_H
#define RADAR_NOWCAST_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RnSamplerKind {
  RN_SAMPLER_KIND_DDIM = 0,
  RN_SAMPLER_KIND_DDPM = 1,
} RnSamplerKind;

typedef enum RnStatus {
  RN_STATUS_OK = 0,
  RN_STATUS_NULL_POINTER = 1,
  RN_STATUS_INVALID_ARGUMENT = 2,
  RN_STATUS_DIMENSION = 3,
  RN_STATUS_CONFIG = 4,
  RN_STATUS_IO = 5,
  RN_STATUS_FORMAT = 6,
  RN_STATUS_NUMERIC = 7,
  RN_STATUS_BUFFER_TOO_SMALL = 8,
  RN_STATUS_INTERNAL = 9,
  RN_STATUS_PANIC = 10,
} RnStatus;

typedef enum RnVariant {
  RN_VARIANT_NO_EMBD = 0,
  RN_VARIANT_TIME_EMBD = 1,
  RN_VARIANT_FULL = 2,
} RnVariant;

/**
 * Opaque model handle.
 */
typedef struct RnModel RnModel;

typedef struct RnModelInfo {
  size_t patch_size;
  /**
   * History length the model was trained with, 0 if unknown.
   */
  size_t n;
  size_t m;
  size_t d;
  size_t blocks;
  size_t t_diff;
  size_t parameter_count;
} RnModelInfo;

typedef struct RnSampler {
  enum RnSamplerKind kind;
  /**
   * DDIM steps.
   */
  size_t steps;
  double eta;
} RnSampler;

/**
 * Overall scores; `psnr_db` is `INFINITY` for a perfect match.
 */
typedef struct RnMetrics {
  double mse;
  double psnr_db;
  double ssim;
  double ets;
  double acc;
} RnMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *rn_version(void);

/**
 * Copies the calling thread's last error message into `buf` (NUL-terminated,
 * truncated to `cap`). Returns the full message length excluding the NUL.
 *
 * # Safety
 * `buf` must be null or point to `cap` writable bytes.
 */
size_t rn_last_error(char *buf, size_t cap);

/**
 * Fresh, untrained model with default geometry and `m` forecast steps.
 *
 * # Safety
 * `out` must be a valid pointer to a handle slot.
 */
enum RnStatus rn_model_new(enum RnVariant variant, size_t m, uint64_t seed, struct RnModel **out);

/**
 * Loads a checkpoint directory written by the trainer.
 *
 * # Safety
 * `dir` must be a NUL-terminated UTF-8 path and `out` a valid handle slot.
 */
enum RnStatus rn_model_load(const char *dir, struct RnModel **out);

/**
 * Releases a handle; null is ignored.
 *
 * # Safety
 * `model` must come from `rn_model_new` / `rn_model_load` and not be used afterwards.
 */
void rn_model_free(struct RnModel *model);

/**
 * # Safety
 * `model` must be a live handle and `info` writable.
 */
enum RnStatus rn_model_info(const struct RnModel *model, struct RnModelInfo *info);

/**
 * Forecasts `M x H x W` from an `N x H x W` history into `out`.
 *
 * # Safety
 * `history` must hold `n*h*w` values and `out` `out_len` writable values.
 */
enum RnStatus rn_nowcast(const struct RnModel *model,
                         const double *history,
                         size_t n,
                         size_t h,
                         size_t w,
                         struct RnSampler sampler,
                         uint64_t seed,
                         double *out,
                         size_t out_len);

/**
 * Repeats the last history frame `m` times.
 *
 * # Safety
 * `history` must hold `n*h*w` values and `out` `out_len` writable values.
 */
enum RnStatus rn_persistence(const double *history,
                             size_t n,
                             size_t h,
                             size_t w,
                             size_t m,
                             double *out,
                             size_t out_len);

/**
 * Scores one `M x H x W` forecast against the truth.
 *
 * # Safety
 * `pred` and `truth` must each hold `m*h*w` values; `out` must be writable.
 */
enum RnStatus rn_evaluate(const double *pred,
                          const double *truth,
                          size_t m,
                          size_t h,
                          size_t w,
                          double threshold,
                          struct RnMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RADAR_NOWCAST_H */
