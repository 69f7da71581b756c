#ifndef CLDRD_H
#define CLDRD_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Role argument of [`cldrd_encoder_encode`].
 */
typedef enum {
  CLDRD_ROLE_QUERY = 0,
  CLDRD_ROLE_DOCUMENT = 1,
} CldrdRole;

typedef enum {
  CLDRD_STATUS_OK = 0,
  CLDRD_STATUS_NULL_POINTER = 1,
  CLDRD_STATUS_INVALID_UTF8 = 2,
  CLDRD_STATUS_IO = 3,
  CLDRD_STATUS_PARSE = 4,
  CLDRD_STATUS_INTEGRITY = 5,
  CLDRD_STATUS_SHAPE = 6,
  CLDRD_STATUS_BOUNDS = 7,
  CLDRD_STATUS_CONFIG = 8,
  CLDRD_STATUS_NUMERIC = 9,
  CLDRD_STATUS_DOMAIN = 10,
  CLDRD_STATUS_PRECONDITION = 11,
  CLDRD_STATUS_EVAL = 12,
  CLDRD_STATUS_LOOKUP = 13,
  CLDRD_STATUS_UNKNOWN_DOCUMENT = 14,
  CLDRD_STATUS_STALE_INDEX = 15,
  CLDRD_STATUS_CHECKPOINT = 16,
  CLDRD_STATUS_BUFFER_TOO_SMALL = 17,
  CLDRD_STATUS_PANIC = 18,
} CldrdStatus;

/**
 * A student encoder plus the featurizer used to tokenize text for it.
 */
typedef struct CldrdEncoder CldrdEncoder;

typedef struct CldrdIndex CldrdIndex;

/**
 * Search results, best first.
 */
typedef struct CldrdRankedList CldrdRankedList;

/**
 * Mean metric values of one run.
 */
typedef struct {
  double mrr_at_10;
  double ndcg_at_10;
  double map_at_1000;
} CldrdMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * Valid until the next call into this library on the same thread.
 */
const char *cldrd_last_error_message(void);

/**
 * Randomly initialized encoder with the default token caps.
 *
 * # Safety
 * `out` must be a valid pointer to write the handle into.
 */
CldrdStatus cldrd_encoder_init(size_t vocab_size,
                               size_t dim,
                               bool shared,
                               uint64_t seed,
                               CldrdEncoder **out);

/**
 * Loads a checkpoint written by the trainer.
 *
 * # Safety
 * `path` is a NUL-terminated string; `out` is a valid pointer.
 */
CldrdStatus cldrd_encoder_load(const char *path, CldrdEncoder **out);

/**
 * # Safety
 * `encoder` and `path` are valid.
 */
CldrdStatus cldrd_encoder_save(const CldrdEncoder *encoder, const char *path);

/**
 * # Safety
 * `encoder` is NULL or a handle from this library not yet freed.
 */
void cldrd_encoder_free(CldrdEncoder *encoder);

/**
 * Embedding width; 0 for NULL.
 *
 * # Safety
 * `encoder` is NULL or a live handle.
 */
size_t cldrd_encoder_dim(const CldrdEncoder *encoder);

/**
 * Writes the embedding of `text` into `out`, which holds `out_len` values.
 *
 * # Safety
 * `encoder` and `text` are valid; `out` points to `out_len` writable doubles.
 */
CldrdStatus cldrd_encoder_encode(const CldrdEncoder *encoder,
                                 const char *text,
                                 CldrdRole role,
                                 double *out,
                                 size_t out_len);

/**
 * Encodes every document of a `docid<TAB>text` collection file.
 *
 * # Safety
 * `encoder` and `collection_path` are valid; `out` is a valid pointer.
 */
CldrdStatus cldrd_index_build(const CldrdEncoder *encoder,
                              const char *collection_path,
                              CldrdIndex **out);

/**
 * # Safety
 * `path` is valid; `out` is a valid pointer.
 */
CldrdStatus cldrd_index_load(const char *path, CldrdIndex **out);

/**
 * # Safety
 * `index` and `path` are valid.
 */
CldrdStatus cldrd_index_save(const CldrdIndex *index, const char *path);

/**
 * Number of indexed documents; 0 for NULL.
 *
 * # Safety
 * `index` is NULL or a live handle.
 */
size_t cldrd_index_len(const CldrdIndex *index);

/**
 * # Safety
 * `index` is NULL or a handle from this library not yet freed.
 */
void cldrd_index_free(CldrdIndex *index);

/**
 * Exact top-`k` search for `query_text`. Fails with `CLDRD_STATUS_STALE_INDEX`
 * when the index was built from a different version of a trained encoder.
 *
 * # Safety
 * `index`, `encoder` and `query_text` are valid; `out` is a valid pointer.
 */
CldrdStatus cldrd_index_search(const CldrdIndex *index,
                               const CldrdEncoder *encoder,
                               const char *query_text,
                               size_t k,
                               CldrdRankedList **out);

/**
 * # Safety
 * `list` is NULL or a live handle.
 */
size_t cldrd_ranked_list_len(const CldrdRankedList *list);

/**
 * Document id at 0-based position `i`, or NULL when out of range. The string
 * lives as long as the list.
 *
 * # Safety
 * `list` is NULL or a live handle.
 */
const char *cldrd_ranked_list_doc_id(const CldrdRankedList *list, size_t i);

/**
 * Score at 0-based position `i`; NaN when out of range.
 *
 * # Safety
 * `list` is NULL or a live handle.
 */
double cldrd_ranked_list_score(const CldrdRankedList *list, size_t i);

/**
 * # Safety
 * `list` is NULL or a handle from this library not yet freed.
 */
void cldrd_ranked_list_free(CldrdRankedList *list);

/**
 * Distillation loss over one list of `n` documents. `ranks` are the
 * 1-based student retrieval ranks. `grad_out` may be NULL; otherwise it
 * receives `n` values.
 *
 * # Safety
 * `scores`, `labels` and `ranks` point to `n` values; `loss_out` is valid;
 * `grad_out` is NULL or points to `n` writable doubles.
 */
CldrdStatus cldrd_kd_loss(const double *scores,
                          const double *labels,
                          const size_t *ranks,
                          size_t n,
                          double *loss_out,
                          double *grad_out);

/**
 * MRR@10, nDCG@10 (linear gain) and MAP@1000 of a TREC run file.
 *
 * # Safety
 * `run_path` and `qrels_path` are valid strings; `out` is valid.
 */
CldrdStatus cldrd_evaluate(const char *run_path,
                           const char *qrels_path,
                           uint32_t rel_threshold,
                           CldrdMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CLDRD_H */
