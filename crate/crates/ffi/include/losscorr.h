#ifndef LOSSCORR_H
#define LOSSCORR_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  LC_ESTIMATOR_MODE_ARGMAX = 0,
  LC_ESTIMATOR_MODE_PERCENTILE = 1,
} LcEstimatorMode;

typedef enum {
  LC_LOSS_MODE_PLAIN = 0,
  LC_LOSS_MODE_BACKWARD = 1,
  LC_LOSS_MODE_FORWARD = 2,
} LcLossMode;

typedef enum {
  LC_STATUS_OK = 0,
  LC_STATUS_NULL_POINTER = 1,
  LC_STATUS_INVALID_ARGUMENT = 2,
  LC_STATUS_DIMENSION = 3,
  LC_STATUS_SINGULAR = 4,
  LC_STATUS_PARSE = 5,
  LC_STATUS_INTERNAL = 6,
} LcStatus;

typedef struct LcLoss LcLoss;

typedef struct LcNetwork LcNetwork;

typedef struct LcNoiseMatrix LcNoiseMatrix;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *lc_last_error_message(void);

/**
 * NUL-terminated library version.
 */
const char *lc_version(void);

/**
 * Validates a row-major `classes × classes` row-stochastic matrix.
 *
 * # Safety
 * `entries` must point to `classes * classes` doubles; `out` must be writable.
 */
LcStatus lc_noise_matrix_new(const double *entries, size_t classes, LcNoiseMatrix **out);

/**
 * Symmetric noise: `1 − level` on the diagonal, the rest spread evenly.
 *
 * # Safety
 * `out` must be writable.
 */
LcStatus lc_noise_matrix_symmetric(size_t classes, double level, LcNoiseMatrix **out);

/**
 * # Safety
 * `matrix` must be a live handle or null.
 */
size_t lc_noise_matrix_classes(const LcNoiseMatrix *matrix);

/**
 * Copies the row-major entries into `out` (`classes²` doubles).
 *
 * # Safety
 * `matrix` must be a live handle; `out` must hold `len` doubles.
 */
LcStatus lc_noise_matrix_entries(const LcNoiseMatrix *matrix, double *out, size_t len);

/**
 * Row-major inverse of `(1 − identity_mix)·T + identity_mix·I`.
 *
 * # Safety
 * `matrix` must be a live handle; `out` must hold `len` doubles.
 */
LcStatus lc_noise_matrix_inverse(const LcNoiseMatrix *matrix,
                                 double identity_mix,
                                 double *out,
                                 size_t len);

/**
 * Draws one noisy label per clean label.
 *
 * # Safety
 * `labels` and `out` must each hold `n` elements.
 */
LcStatus lc_noise_matrix_corrupt(const LcNoiseMatrix *matrix,
                                 const size_t *labels,
                                 size_t n,
                                 uint64_t seed,
                                 size_t *out);

/**
 * # Safety
 * `matrix` must come from this library and not be used afterwards.
 */
void lc_noise_matrix_free(LcNoiseMatrix *matrix);

/**
 * `noise` may be null only for the plain loss. The matrix is copied.
 *
 * # Safety
 * `noise` must be a live handle or null; `out` must be writable.
 */
LcStatus lc_loss_new(LcLossMode mode,
                     const LcNoiseMatrix *noise,
                     double identity_mix,
                     LcLoss **out);

/**
 * Loss value at `logits` for `label`; writes `∂loss/∂logits` to `grad` when non-null.
 *
 * # Safety
 * `logits` must hold `len` doubles, `grad` (if non-null) likewise; `value` must be writable.
 */
LcStatus lc_loss_evaluate(const LcLoss *loss,
                          size_t label,
                          const double *logits,
                          size_t len,
                          double *value,
                          double *grad);

/**
 * # Safety
 * `loss` must come from this library and not be used afterwards.
 */
void lc_loss_free(LcLoss *loss);

/**
 * Loads a network checkpoint from its JSON text.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
LcStatus lc_network_from_json(const char *json, LcNetwork **out);

/**
 * # Safety
 * `net` must be a live handle or null.
 */
size_t lc_network_input_dim(const LcNetwork *net);

/**
 * # Safety
 * `net` must be a live handle or null.
 */
size_t lc_network_output_dim(const LcNetwork *net);

/**
 * Inference-mode logits for one input.
 *
 * # Safety
 * `input` must hold `input_len` doubles and `out` `out_len` doubles.
 */
LcStatus lc_network_logits(const LcNetwork *net,
                           const double *input,
                           size_t input_len,
                           double *out,
                           size_t out_len);

/**
 * # Safety
 * `net` must come from this library and not be used afterwards.
 */
void lc_network_free(LcNetwork *net);

/**
 * Anchor-point estimate from a row-major `rows × classes` buffer of softmax scores.
 *
 * # Safety
 * `scores` must hold `rows * classes` doubles; `out` must be writable.
 */
LcStatus lc_estimate(const double *scores,
                     size_t rows,
                     size_t classes,
                     LcEstimatorMode mode,
                     double alpha,
                     bool row_normalize,
                     LcNoiseMatrix **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LOSSCORR_H */
