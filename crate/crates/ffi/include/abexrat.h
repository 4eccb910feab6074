#ifndef ABEXRAT_H
#define ABEXRAT_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes. The nonzero values below 5 match the command-line exit codes.
 */
typedef enum AbxStatus {
  ABX_STATUS_OK = 0,
  ABX_STATUS_INVALID_ARGUMENT = 1,
  ABX_STATUS_DATA = 2,
  ABX_STATUS_PROVIDER = 3,
  ABX_STATUS_NUMERIC = 4,
  ABX_STATUS_NULL_POINTER = 5,
  ABX_STATUS_PANIC = 6,
} AbxStatus;

/**
 * Opaque trained model.
 */
typedef struct AbxModel AbxModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *abx_version(void);

/**
 * Message for the most recent failure on this thread, or NULL if none.
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *abx_last_error_message(void);

/**
 * Release a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed already.
 */
void abx_string_free(char *s);

/**
 * Load a model file written by `abexrat train`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum AbxStatus abx_model_load(const char *path, struct AbxModel **out);

/**
 * Parse a model from its JSON text.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a writable pointer.
 */
enum AbxStatus abx_model_from_json(const char *json, struct AbxModel **out);

/**
 * Serialize a model to JSON. Free the result with [`abx_string_free`].
 *
 * # Safety
 * `model` must be a live handle and `out` a writable pointer.
 */
enum AbxStatus abx_model_to_json(const struct AbxModel *model, char **out);

/**
 * Write a model file.
 *
 * # Safety
 * `model` must be a live handle and `path` a NUL-terminated string.
 */
enum AbxStatus abx_model_save(const struct AbxModel *model, const char *path);

/**
 * Release a model handle. NULL is ignored.
 *
 * # Safety
 * `model` must come from this library and not have been freed already.
 */
void abx_model_free(struct AbxModel *model);

/**
 * Input dimension, hidden width and class count. Any out pointer may be NULL.
 *
 * # Safety
 * `model` must be a live handle; non-NULL out pointers must be writable.
 */
enum AbxStatus abx_model_dims(const struct AbxModel *model, size_t *d, size_t *h, size_t *classes);

/**
 * Label of class `index` as a new string; free with [`abx_string_free`].
 *
 * # Safety
 * `model` must be a live handle and `out` a writable pointer.
 */
enum AbxStatus abx_model_label(const struct AbxModel *model, size_t index, char **out);

/**
 * Predicted class index for one embedding of length `len`.
 *
 * # Safety
 * `x` must point to `len` doubles and `out` must be writable.
 */
enum AbxStatus abx_model_predict(const struct AbxModel *model,
                                 const double *x,
                                 size_t len,
                                 size_t *out);

/**
 * Class probabilities for one embedding; `out` must hold `out_len` = C doubles.
 *
 * # Safety
 * `x` must point to `len` doubles and `out` to `out_len` writable doubles.
 */
enum AbxStatus abx_model_probabilities(const struct AbxModel *model,
                                       const double *x,
                                       size_t len,
                                       double *out,
                                       size_t out_len);

/**
 * Evaluate on a JSONL dataset; writes the report JSON to `out` (free with [`abx_string_free`]).
 *
 * # Safety
 * `model` must be a live handle, `dataset_path` a NUL-terminated string, `out` writable.
 */
enum AbxStatus abx_model_evaluate(const struct AbxModel *model,
                                  const char *dataset_path,
                                  char **out);

/**
 * Train on JSONL train/val files. `config_json` may be NULL for defaults and
 * otherwise holds a training config document (missing fields take defaults).
 *
 * # Safety
 * String arguments must be NUL-terminated (or NULL where allowed); `out` writable.
 */
enum AbxStatus abx_train(const char *train_path,
                         const char *val_path,
                         const char *config_json,
                         struct AbxModel **out);

/**
 * FGM perturbation `epsilon · g / ‖g‖` of a length-`len` gradient (zero for a zero gradient).
 *
 * # Safety
 * `grad` and `out` must each point to `len` doubles.
 */
enum AbxStatus abx_fgm_perturb(const double *grad, size_t len, double epsilon, double *out);

/**
 * Mean focal loss over a row-major `batch × classes` logit matrix.
 * `alpha` may be NULL for unit weights. `grad_out`, if not NULL, receives the
 * `batch × classes` gradient of the mean loss with respect to the logits.
 *
 * # Safety
 * Pointers must reference arrays of the stated sizes; `loss_out` must be writable.
 */
enum AbxStatus abx_focal_loss(const double *logits,
                              const size_t *labels,
                              size_t batch,
                              size_t classes,
                              double gamma,
                              const double *alpha,
                              double *loss_out,
                              double *grad_out);

/**
 * Deterministic mock embedding of `text` into `d` unit-norm doubles.
 *
 * # Safety
 * `text` must be NUL-terminated and `out` must point to `d` writable doubles.
 */
enum AbxStatus abx_mock_embed(const char *text, size_t d, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ABEXRAT_H */
