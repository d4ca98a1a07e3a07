#ifndef KGLP_H
#define KGLP_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum KglpStatus {
  KGLP_STATUS_OK = 0,
  KGLP_STATUS_NULL_POINTER = 1,
  KGLP_STATUS_INVALID_UTF8 = 2,
  KGLP_STATUS_IO = 3,
  KGLP_STATUS_PARSE = 4,
  KGLP_STATUS_INVALID_ARGUMENT = 5,
  KGLP_STATUS_NOT_FOUND = 6,
  KGLP_STATUS_INTERNAL = 7,
} KglpStatus;

/**
 * Graph, descriptions and assembly settings loaded from a run config.
 */
typedef struct KglpAssembler KglpAssembler;

/**
 * A trained checkpoint with its tokenizer.
 */
typedef struct KglpModel KglpModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. Owned by the library;
 * valid until the next call on this thread.
 */
const char *kglp_last_error_message(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library, freed at most once.
 */
void kglp_string_free(char *s);

/**
 * Description prefix before the first `;`.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be writable.
 */
enum KglpStatus kglp_shorten_description(const char *text, char **out);

/**
 * Learning rate at `step`; 0 when `d_model` or `warmup` is 0.
 */
double kglp_lr_at(uint64_t step, uint64_t d_model, uint64_t warmup);

/**
 * # Safety
 * `predicted` and `truth` must point to `len` elements; `out` must be writable.
 */
enum KglpStatus kglp_loss_stage1(const double *predicted,
                                 const uint8_t *truth,
                                 size_t len,
                                 double alpha,
                                 double *out);

/**
 * # Safety
 * `predicted` and `truth` must point to `len` elements; `out` must be writable.
 */
enum KglpStatus kglp_loss_stage23(const double *predicted,
                                  const uint8_t *truth,
                                  size_t len,
                                  double alpha,
                                  double threshold,
                                  double *out);

/**
 * # Safety
 * `scores` must point to `n_scores` values and `true_set` to `n_true` indices.
 */
enum KglpStatus kglp_precision_at_k(const double *scores,
                                    size_t n_scores,
                                    const size_t *true_set,
                                    size_t n_true,
                                    size_t k,
                                    double *out);

/**
 * Character-trigram cosine similarity of two strings.
 *
 * # Safety
 * `a` and `b` must be NUL-terminated strings; `out` must be writable.
 */
enum KglpStatus kglp_default_similarity(const char *a, const char *b, double *out);

/**
 * Build an assembler from a TOML config. Relative paths resolve against
 * `base_dir`, or the working directory when it is null.
 *
 * # Safety
 * String arguments must be NUL-terminated; `out` must be writable.
 */
enum KglpStatus kglp_assembler_new(const char *config_toml,
                                   const char *base_dir,
                                   struct KglpAssembler **out);

/**
 * Assemble the input for one pattern. `masked_side` is `"head"` or `"tail"`.
 *
 * # Safety
 * `handle` must come from [`kglp_assembler_new`]; strings must be
 * NUL-terminated; `out_text` must be writable, `out_tokens` may be null.
 */
enum KglpStatus kglp_assembler_assemble(const struct KglpAssembler *handle,
                                        const char *masked_side,
                                        const char *relation,
                                        const char *given,
                                        char **out_text,
                                        size_t *out_tokens);

/**
 * # Safety
 * `handle` must be null or come from [`kglp_assembler_new`], freed at most once.
 */
void kglp_assembler_free(struct KglpAssembler *handle);

/**
 * # Safety
 * `path` must be NUL-terminated; `out` must be writable.
 */
enum KglpStatus kglp_model_load(const char *path, struct KglpModel **out);

/**
 * # Safety
 * `handle` must come from [`kglp_model_load`]; `out` must be writable.
 */
enum KglpStatus kglp_model_num_labels(const struct KglpModel *handle, size_t *out);

/**
 * Name of label column `index`; free the result with [`kglp_string_free`].
 *
 * # Safety
 * `handle` must come from [`kglp_model_load`]; `out` must be writable.
 */
enum KglpStatus kglp_model_label_name(const struct KglpModel *handle, size_t index, char **out);

/**
 * Per-label probabilities for an assembled input text. `out` must hold
 * `capacity` values, at least the number of labels.
 *
 * # Safety
 * `handle` must come from [`kglp_model_load`]; `text` must be
 * NUL-terminated; `out` must point to `capacity` writable doubles.
 */
enum KglpStatus kglp_model_predict(const struct KglpModel *handle,
                                   const char *text,
                                   double *out,
                                   size_t capacity);

/**
 * # Safety
 * `handle` must be null or come from [`kglp_model_load`], freed at most once.
 */
void kglp_model_free(struct KglpModel *handle);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KGLP_H */
