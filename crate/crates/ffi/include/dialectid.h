#ifndef DIALECTID_H
#define DIALECTID_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum {
  DID_STATUS_OK = 0,
  DID_STATUS_USAGE = 1,
  DID_STATUS_DATA = 2,
  DID_STATUS_NUMERICAL = 3,
  DID_STATUS_NULL_POINTER = 4,
  DID_STATUS_INVALID_UTF8 = 5,
  DID_STATUS_BUFFER_TOO_SMALL = 6,
  DID_STATUS_PANIC = 7,
} DidStatus;

/**
 * Trained character CNN.
 */
typedef struct DidCnnModel DidCnnModel;

/**
 * Trained string-kernel classifier (KRR or SVM).
 */
typedef struct DidKernelModel DidKernelModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread; empty when none. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *did_last_error(void);

/**
 * Releases a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must come from this library and must not be used afterwards.
 */
void did_string_free(char *s);

/**
 * Number of distinct character `n`-grams shared by two texts, optionally
 * cosine-normalized. Texts are used as given, without preprocessing.
 *
 * # Safety
 * `x` and `y` must be NUL-terminated strings; `out` must be writable.
 */
DidStatus did_kernel_value(const char *x, const char *y, size_t n, bool normalized, double *out);

/**
 * Canonical text form used by every model (composed Unicode, lowercase,
 * single spaces). The result is freed with [`did_string_free`].
 *
 * # Safety
 * `input` must be a NUL-terminated string; `out` must be writable.
 */
DidStatus did_preprocess(const char *input, char **out);

/**
 * Loads a kernel model saved with its training texts.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
DidStatus did_kernel_model_load(const char *path, DidKernelModel **out);

/**
 * # Safety
 * `model` must come from [`did_kernel_model_load`] or be NULL.
 */
void did_kernel_model_free(DidKernelModel *model);

/**
 * Number of classes, or 0 for NULL.
 *
 * # Safety
 * `model` must be a live handle or NULL.
 */
size_t did_kernel_model_classes(const DidKernelModel *model);

/**
 * Name of class `index`, owned by the model; NULL when out of range.
 *
 * # Safety
 * `model` must be a live handle or NULL.
 */
const char *did_kernel_model_class_name(const DidKernelModel *model, size_t index);

/**
 * Classifies one raw text. Writes the class index to `label` and, when
 * `probs` is not NULL, `probs_len` calibrated probabilities.
 *
 * # Safety
 * `model` must be live, `input` NUL-terminated, `label` writable and `probs`
 * NULL or writable for `probs_len` values.
 */
DidStatus did_kernel_model_predict(const DidKernelModel *model,
                                   const char *input,
                                   size_t *label,
                                   double *probs,
                                   size_t probs_len);

/**
 * Loads a CNN model file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
DidStatus did_cnn_load(const char *path, DidCnnModel **out);

/**
 * # Safety
 * `model` must come from [`did_cnn_load`] or be NULL.
 */
void did_cnn_free(DidCnnModel *model);

/**
 * Number of classes, or 0 for NULL.
 *
 * # Safety
 * `model` must be a live handle or NULL.
 */
size_t did_cnn_classes(const DidCnnModel *model);

/**
 * Name of class `index`, owned by the model; NULL when out of range.
 *
 * # Safety
 * `model` must be a live handle or NULL.
 */
const char *did_cnn_class_name(const DidCnnModel *model, size_t index);

/**
 * Classifies one raw text with the CNN.
 *
 * # Safety
 * As for [`did_kernel_model_predict`].
 */
DidStatus did_cnn_predict(const DidCnnModel *model,
                          const char *input,
                          size_t *label,
                          float *probs,
                          size_t probs_len);

/**
 * Grad-CAM importance in `[0, 1]` for each character of the preprocessed
 * text that fits the network input. `written` receives the number of
 * values; when `capacity` is too small it receives the required size and
 * [`DidStatus::BufferTooSmall`] is returned.
 *
 * # Safety
 * `model` must be live, `input` NUL-terminated, `written` writable and
 * `importance` writable for `capacity` values (or NULL with capacity 0).
 */
DidStatus did_cnn_gradcam(const DidCnnModel *model,
                          const char *input,
                          size_t target_class,
                          float *importance,
                          size_t capacity,
                          size_t *written);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DIALECTID_H */
