#ifndef CSOD_H
#define CSOD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CsodStatus {
  CSOD_STATUS_OK = 0,
  CSOD_STATUS_NULL_POINTER = 1,
  CSOD_STATUS_INVALID_ARGUMENT = 2,
  CSOD_STATUS_IO = 3,
  CSOD_STATUS_FORMAT = 4,
  CSOD_STATUS_VALIDATION = 5,
  CSOD_STATUS_RETRY_EXHAUSTED = 6,
  CSOD_STATUS_PANIC = 7,
} CsodStatus;

/**
 * Loaded dataset handle.
 */
typedef struct CsodDataset CsodDataset;

/**
 * Selection result handle.
 */
typedef struct CsodSelection CsodSelection;

/**
 * Options for [`csod_select`]. `lambda` NaN selects the per-count default;
 * `presample_per_class` 0 disables pre-sampling.
 */
typedef struct CsodSelectOptions {
  size_t target_count;
  double lambda;
  uint64_t seed;
  size_t presample_per_class;
  bool objectwise;
} CsodSelectOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *csod_last_error_message(void);

enum CsodStatus csod_dataset_load(const char *manifest_path,
                                  const char *features_path,
                                  struct CsodDataset **out);

void csod_dataset_free(struct CsodDataset *dataset);

size_t csod_dataset_num_images(const struct CsodDataset *dataset);

size_t csod_dataset_num_objects(const struct CsodDataset *dataset);

size_t csod_dataset_num_classes(const struct CsodDataset *dataset);

size_t csod_dataset_dim(const struct CsodDataset *dataset);

double csod_default_lambda(size_t target_count);

/**
 * Runs `method` (e.g. `"csod"`, `"herding"`). `excluded` may be null when
 * `num_excluded` is 0.
 */
enum CsodStatus csod_select(const struct CsodDataset *dataset,
                            const char *method,
                            const struct CsodSelectOptions *options,
                            const size_t *excluded,
                            size_t num_excluded,
                            struct CsodSelection **out);

void csod_selection_free(struct CsodSelection *selection);

size_t csod_selection_len(const struct CsodSelection *selection);

bool csod_selection_is_partial(const struct CsodSelection *selection);

/**
 * Copies up to `capacity` selected ids, in pick order, into `buf`; returns
 * the number copied.
 */
size_t csod_selection_ids(const struct CsodSelection *selection, size_t *buf, size_t capacity);

/**
 * Result JSON (same bytes as the CLI writes). Free with [`csod_string_free`].
 */
enum CsodStatus csod_selection_to_json(const struct CsodSelection *selection, char **out);

void csod_string_free(char *s);

enum CsodStatus csod_cosine(const float *a, const float *b, size_t len, double *out);

enum CsodStatus csod_kl_divergence(const double *p, const double *q, size_t len, double *out);

enum CsodStatus csod_coverage_objective(const struct CsodDataset *dataset,
                                        const size_t *image_ids,
                                        size_t num_ids,
                                        double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CSOD_H */
