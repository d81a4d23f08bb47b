#ifndef TRANSAL_H
#define TRANSAL_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes. Zero is success.
typedef enum TransalStatus {
  TRANSAL_STATUS_OK = 0,
  TRANSAL_STATUS_NULL_POINTER = 1,
  TRANSAL_STATUS_INVALID_UTF8 = 2,
  TRANSAL_STATUS_PARSE_ERROR = 3,
  TRANSAL_STATUS_IO_ERROR = 4,
  TRANSAL_STATUS_INVALID_ARGUMENT = 5,
  TRANSAL_STATUS_SELECTION_FAILED = 6,
  TRANSAL_STATUS_PANIC = 7,
} TransalStatus;

// A loaded corpus.
typedef struct TransalCorpus TransalCorpus;

// A parsed logical form.
typedef struct TransalLf TransalLf;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// The message for the last failed call on this thread, or NULL. Valid
// until the next call into the library on the same thread.
const char *transal_last_error(void);

// Library version as a static string.
const char *transal_version(void);

// Releases a string returned by the library. NULL is ignored.
//
// # Safety
// `s` must come from this library and not be freed twice.
void transal_string_free(char *s);

// Parses a bracketed LF.
//
// # Safety
// `text` must be a NUL-terminated string and `out` writable.
enum TransalStatus transal_lf_parse(const char *text, struct TransalLf **out);

// Renders an LF in canonical form.
//
// # Safety
// `lf` must be a live handle and `out` writable.
enum TransalStatus transal_lf_render(const struct TransalLf *lf, char **out);

// Number of nodes in the tree.
//
// # Safety
// `lf` must be a live handle and `out` writable.
enum TransalStatus transal_lf_node_count(const struct TransalLf *lf, uintptr_t *out);

// Distinct compounds of the LF, one per line, sorted.
//
// # Safety
// `lf` must be a live handle and `out` writable.
enum TransalStatus transal_lf_compounds(const struct TransalLf *lf, char **out);

// Releases an LF handle. NULL is ignored.
//
// # Safety
// `lf` must come from [`transal_lf_parse`] and not be freed twice.
void transal_lf_free(struct TransalLf *lf);

// Loads a JSON-lines corpus.
//
// # Safety
// String arguments must be NUL-terminated and `out` writable.
enum TransalStatus transal_corpus_load(const char *path,
                                       const char *source_lang,
                                       const char *target_lang,
                                       struct TransalCorpus **out);

// Number of examples in the corpus.
//
// # Safety
// `corpus` must be a live handle and `out` writable.
enum TransalStatus transal_corpus_len(const struct TransalCorpus *corpus, uintptr_t *out);

// Releases a corpus handle. NULL is ignored.
//
// # Safety
// `corpus` must come from [`transal_corpus_load`] and not be freed twice.
void transal_corpus_free(struct TransalCorpus *corpus);

// Selects `budget` examples from the whole corpus using source data only
// and writes their ids, one per line. Strategies that need a parser or a
// machine translator are rejected.
//
// # Safety
// `corpus` must be a live handle, `strategy` NUL-terminated and `out`
// writable.
enum TransalStatus transal_select(const struct TransalCorpus *corpus,
                                  const char *strategy,
                                  uintptr_t budget,
                                  uint64_t seed,
                                  char **out);

// Per-round batch sizes for a pool of `pool_size` and `len` cumulative
// percentages. Writes `len` values to `out`.
//
// # Safety
// `percents` must point to `len` doubles and `out` to `len` writable slots.
enum TransalStatus transal_budget_sizes(uintptr_t pool_size,
                                        const double *percents,
                                        uintptr_t len,
                                        uintptr_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TRANSAL_H */
