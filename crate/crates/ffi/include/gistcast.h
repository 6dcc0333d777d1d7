#ifndef GISTCAST_H
#define GISTCAST_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Normalization applied by [`gc_normalize_predictions`].
typedef enum GcNormalization {
  // Maps into [-1, 1] with the midpoint of the range at 0.
  GC_NORMALIZATION_ZERO_CENTERED = 0,
  // Maps into [0, 1].
  GC_NORMALIZATION_UNIT = 1,
} GcNormalization;

// Status codes returned by every fallible call.
typedef enum GcStatus {
  GC_STATUS_OK = 0,
  GC_STATUS_NULL_POINTER = 1,
  GC_STATUS_INVALID_UTF8 = 2,
  GC_STATUS_IO = 3,
  GC_STATUS_PARSE = 4,
  GC_STATUS_VALIDATION = 5,
  GC_STATUS_BAD_MAGIC = 6,
  GC_STATUS_DIM_MISMATCH = 7,
  GC_STATUS_TRUNCATED_PAYLOAD = 8,
  GC_STATUS_ID_MANIFEST = 9,
  GC_STATUS_MISSING_ID = 10,
  GC_STATUS_SHAPE = 11,
  GC_STATUS_NON_FINITE = 12,
  GC_STATUS_INVALID_ARGUMENT = 13,
  GC_STATUS_BUFFER_TOO_SMALL = 14,
  GC_STATUS_PANIC = 15,
  GC_STATUS_OTHER = 16,
} GcStatus;

// Opaque trained model.
typedef struct GcCheckpoint GcCheckpoint;

// Opaque sentence embedding table.
typedef struct GcEmbeddingTable GcEmbeddingTable;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *gc_version(void);

// Message for the last failed call on this thread, or NULL. The pointer
// stays valid until the next gistcast call on the same thread.
const char *gc_last_error(void);

// Reads an embedding table and its id manifest. `expected_dim` of 0
// accepts any width.
//
// # Safety
// `path` must be a valid NUL-terminated string and `out` a valid pointer.
enum GcStatus gc_embedding_table_read(const char *path,
                                      size_t expected_dim,
                                      struct GcEmbeddingTable **out);

// Builds a table from `count` ids and a row-major `count x dim` buffer.
//
// # Safety
// `ids` must point to `count` NUL-terminated strings and `data` to
// `count * dim` floats.
enum GcStatus gc_embedding_table_new(size_t dim,
                                     const char *const *ids,
                                     const float *data,
                                     size_t count,
                                     struct GcEmbeddingTable **out);

// Writes the table and its id manifest atomically.
//
// # Safety
// `table` must come from this library; `path` must be NUL-terminated.
enum GcStatus gc_embedding_table_write(const struct GcEmbeddingTable *table, const char *path);

// Row width, or 0 for a NULL handle.
//
// # Safety
// `table` must be NULL or come from this library.
size_t gc_embedding_table_dim(const struct GcEmbeddingTable *table);

// Number of rows, or 0 for a NULL handle.
//
// # Safety
// `table` must be NULL or come from this library.
size_t gc_embedding_table_len(const struct GcEmbeddingTable *table);

// Copies the vector for sentence `id` into `buf`, which holds `buf_len`
// floats.
//
// # Safety
// `buf` must be writable for `buf_len` floats.
enum GcStatus gc_embedding_table_get(const struct GcEmbeddingTable *table,
                                     const char *id,
                                     float *buf,
                                     size_t buf_len);

// # Safety
// `table` must be NULL or come from this library, and is not used again.
void gc_embedding_table_free(struct GcEmbeddingTable *table);

// Loads a checkpoint written by `gistcast train`.
//
// # Safety
// `path` must be NUL-terminated and `out` a valid pointer.
enum GcStatus gc_checkpoint_load(const char *path, struct GcCheckpoint **out);

// Input embedding width, or 0 for a NULL handle.
//
// # Safety
// `ckpt` must be NULL or come from this library.
size_t gc_checkpoint_dim(const struct GcCheckpoint *ckpt);

// Scores one collection of `m` pseudo-article embeddings (`m x d`,
// row-major). Writes fci, food price and social-event predictions in
// target units to `preds[3]` and, when `attn` is not NULL, the `m`
// attention weights.
//
// # Safety
// `data` must hold `m * d` doubles, `preds` 3 and `attn` (if set) `m`.
enum GcStatus gc_checkpoint_forward(const struct GcCheckpoint *ckpt,
                                    const double *data,
                                    size_t m,
                                    size_t d,
                                    double *preds,
                                    double *attn);

// # Safety
// `ckpt` must be NULL or come from this library, and is not used again.
void gc_checkpoint_free(struct GcCheckpoint *ckpt);

// Min-max normalizes `n` predictions into `out`. A constant input maps to
// the centre of the target range.
//
// # Safety
// `preds` and `out` must each hold `n` doubles; they may alias.
enum GcStatus gc_normalize_predictions(const double *preds,
                                       size_t n,
                                       enum GcNormalization mode,
                                       double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GISTCAST_H */
