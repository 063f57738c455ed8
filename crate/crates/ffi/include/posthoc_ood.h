#ifndef POSTHOC_OOD_H
#define POSTHOC_OOD_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Clamp threshold tuned for the EVA-CLIP giant ImageNet-1k head.
 */
#define OOD_EVA_CLIP_CLAMP -0.76853585

/**
 * Softmax temperature paired with [`OOD_EVA_CLIP_CLAMP`].
 */
#define OOD_DEFAULT_TEMPERATURE 1.1

typedef enum OodStatus {
  OOD_STATUS_OK = 0,
  OOD_STATUS_NULL_POINTER = 1,
  OOD_STATUS_INVALID_ARGUMENT = 2,
  OOD_STATUS_DIMENSION_MISMATCH = 3,
  OOD_STATUS_IO = 4,
  OOD_STATUS_FORMAT = 5,
  OOD_STATUS_NON_FINITE = 6,
  OOD_STATUS_EMPTY = 7,
  OOD_STATUS_BUFFER_TOO_SMALL = 8,
  OOD_STATUS_PANIC = 99,
} OodStatus;

/**
 * Opaque classifier head.
 */
typedef struct OodHead OodHead;

/**
 * Opaque dense `f32` matrix: features or logits.
 */
typedef struct OodMatrix OodMatrix;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failing call on this thread, or NULL. The pointer is
 * owned by the library and valid until the next failing call on this thread.
 */
const char *ood_last_error_message(void);

/**
 * Copies `rows * cols` row-major values into a new matrix.
 *
 * # Safety
 * `values` must point to `rows * cols` readable floats; `out` must be writable.
 */
enum OodStatus ood_matrix_new(uintptr_t rows,
                              uintptr_t cols,
                              const float *values,
                              struct OodMatrix **out);

/**
 * Loads a 2-D `f32` `.oodt` file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum OodStatus ood_matrix_load(const char *path, struct OodMatrix **out);

/**
 * Writes the matrix as a 2-D `f32` `.oodt` file.
 *
 * # Safety
 * `matrix` must be a live handle; `path` a NUL-terminated string.
 */
enum OodStatus ood_matrix_save(const struct OodMatrix *matrix, const char *path);

/**
 * # Safety
 * `matrix` must be NULL or a handle not yet freed.
 */
void ood_matrix_free(struct OodMatrix *matrix);

/**
 * Row count, or 0 for NULL.
 *
 * # Safety
 * `matrix` must be NULL or a live handle.
 */
uintptr_t ood_matrix_rows(const struct OodMatrix *matrix);

/**
 * Column count, or 0 for NULL.
 *
 * # Safety
 * `matrix` must be NULL or a live handle.
 */
uintptr_t ood_matrix_cols(const struct OodMatrix *matrix);

/**
 * Copies the row-major values into `out`, which holds `len` floats.
 *
 * # Safety
 * `matrix` must be a live handle; `out` must have room for `len` floats.
 */
enum OodStatus ood_matrix_copy_values(const struct OodMatrix *matrix, float *out, uintptr_t len);

/**
 * Builds a head from row-major `feature_dim × classes` weights and a
 * length-`classes` bias.
 *
 * # Safety
 * `weights` and `bias` must point to that many readable floats; `out` must be writable.
 */
enum OodStatus ood_head_new(uintptr_t feature_dim,
                            uintptr_t classes,
                            const float *weights,
                            const float *bias,
                            struct OodHead **out);

/**
 * # Safety
 * Both paths must be NUL-terminated strings; `out` must be writable.
 */
enum OodStatus ood_head_load(const char *weights_path, const char *bias_path, struct OodHead **out);

/**
 * # Safety
 * `head` must be NULL or a handle not yet freed.
 */
void ood_head_free(struct OodHead *head);

/**
 * Class count, or 0 for NULL.
 *
 * # Safety
 * `head` must be NULL or a live handle.
 */
uintptr_t ood_head_classes(const struct OodHead *head);

/**
 * New matrix with every element replaced by `min(x, c)`.
 *
 * # Safety
 * `features` must be a live handle; `out` must be writable.
 */
enum OodStatus ood_react_apply(const struct OodMatrix *features, float c, struct OodMatrix **out);

/**
 * Percentile `p` in (0, 100) of all activations, linear interpolation.
 *
 * # Safety
 * `features` must be a live handle; `c_out` must be writable.
 */
enum OodStatus ood_react_calibrate(const struct OodMatrix *features, double p, float *c_out);

/**
 * Fraction of activations `<= c`.
 *
 * # Safety
 * `features` must be a live handle; `fraction_out` must be writable.
 */
enum OodStatus ood_coverage_fraction(const struct OodMatrix *features,
                                     float c,
                                     double *fraction_out);

/**
 * `features × W + b`.
 *
 * # Safety
 * `features` and `head` must be live handles; `out` must be writable.
 */
enum OodStatus ood_compute_logits(const struct OodMatrix *features,
                                  const struct OodHead *head,
                                  struct OodMatrix **out);

/**
 * Elementwise mean of `count` equally shaped logit matrices.
 *
 * # Safety
 * `views` must point to `count` live handles; `out` must be writable.
 */
enum OodStatus ood_ensemble_logits(const struct OodMatrix *const *views,
                                   uintptr_t count,
                                   struct OodMatrix **out);

/**
 * Temperature-scaled maximum softmax probability per row, written to
 * `scores_out` (room for `len` floats, at least the row count).
 *
 * # Safety
 * `logits` must be a live handle; `scores_out` must have room for `len` floats.
 */
enum OodStatus ood_msp_score(const struct OodMatrix *logits,
                             float temperature,
                             float *scores_out,
                             uintptr_t len);

/**
 * Row-wise arg-max (lowest index on ties) into `classes_out`.
 *
 * # Safety
 * `logits` must be a live handle; `classes_out` must have room for `len` values.
 */
enum OodStatus ood_predict_class(const struct OodMatrix *logits,
                                 uint32_t *classes_out,
                                 uintptr_t len);

/**
 * Writes 1 (ID) where `score > tau` and 0 (OOD) otherwise.
 *
 * # Safety
 * `scores` must point to `n` floats; `is_id_out` must have room for `n` bytes.
 */
enum OodStatus ood_classify(const float *scores, uintptr_t n, float tau, uint8_t *is_id_out);

/**
 * AUROC with ID as positives, ties counted as one half.
 *
 * # Safety
 * `id` / `ood` must point to `n_id` / `n_ood` floats; `auroc_out` must be writable.
 */
enum OodStatus ood_auroc(const float *id,
                         uintptr_t n_id,
                         const float *ood,
                         uintptr_t n_ood,
                         double *auroc_out);

/**
 * FPR at the first observed ID-score threshold whose TPR reaches `tpr_target`.
 *
 * # Safety
 * `id` / `ood` must point to `n_id` / `n_ood` floats; `fpr_out` and
 * `tau_out` must be writable.
 */
enum OodStatus ood_fpr_at_tpr(const float *id,
                              uintptr_t n_id,
                              const float *ood,
                              uintptr_t n_ood,
                              double tpr_target,
                              double *fpr_out,
                              float *tau_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* POSTHOC_OOD_H */
