#ifndef SPECQA_H
#define SPECQA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SpecqaStatus {
  SPECQA_STATUS_OK = 0,
  SPECQA_STATUS_NULL_ARGUMENT = 1,
  SPECQA_STATUS_INVALID_UTF8 = 2,
  /**
   * Unreadable or malformed file.
   */
  SPECQA_STATUS_INPUT = 3,
  /**
   * Shape or configuration problem.
   */
  SPECQA_STATUS_CONFIG = 4,
  /**
   * Numeric failure or empty input.
   */
  SPECQA_STATUS_RUNTIME = 5,
  SPECQA_STATUS_PANIC = 6,
} SpecqaStatus;

/**
 * Opaque model handle.
 */
typedef struct SpecqaModel SpecqaModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *specqa_version(void);

/**
 * Message of the last failed call on this thread, or NULL.
 */
const char *specqa_last_error_message(void);

/**
 * Loads a checkpoint file. On success `*out` owns a handle that must be
 * released with [`specqa_model_free`]; on failure `*out` is set to NULL.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum SpecqaStatus specqa_model_load(const char *path, struct SpecqaModel **out);

/**
 * Releases a handle. NULL is ignored.
 *
 * # Safety
 * `model` must be NULL or a handle from [`specqa_model_load`] not yet freed.
 */
void specqa_model_free(struct SpecqaModel *model);

/**
 * Vocabulary size including the out-of-vocabulary row, or 0 for NULL.
 *
 * # Safety
 * `model` must be NULL or a live handle.
 */
size_t specqa_model_vocab_size(const struct SpecqaModel *model);

/**
 * Hidden size per LSTM direction, or 0 for NULL.
 *
 * # Safety
 * `model` must be NULL or a live handle.
 */
size_t specqa_model_hidden_size(const struct SpecqaModel *model);

/**
 * Relevance probability of `candidate` for `question`.
 *
 * # Safety
 * `model` must be a live handle, the strings NUL-terminated, `out` writable.
 */
enum SpecqaStatus specqa_probability(const struct SpecqaModel *model,
                                     const char *question,
                                     const char *candidate,
                                     double *out);

/**
 * Ranks `count` candidates. Writes, for each rank position `r`, the input
 * index into `out_order[r]` and its probability into `out_probability[r]`.
 * Both arrays must hold `count` elements.
 *
 * # Safety
 * `candidates` must point to `count` NUL-terminated strings and the output
 * arrays to `count` writable elements each.
 */
enum SpecqaStatus specqa_rank(const struct SpecqaModel *model,
                              const char *question,
                              const char *const *candidates,
                              size_t count,
                              size_t *out_order,
                              double *out_probability);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPECQA_H */
