#ifndef CROWDNER_H
#define CROWDNER_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes.
typedef enum CrowdnerStatus {
  CROWDNER_STATUS_OK = 0,
  CROWDNER_STATUS_NULL_POINTER = 1,
  CROWDNER_STATUS_INVALID_UTF8 = 2,
  CROWDNER_STATUS_IO = 3,
  CROWDNER_STATUS_PARSE = 4,
  CROWDNER_STATUS_VALIDATION = 5,
  CROWDNER_STATUS_CONFIG = 6,
  CROWDNER_STATUS_SHAPE = 7,
  CROWDNER_STATUS_NON_FINITE = 8,
  CROWDNER_STATUS_PANIC = 9,
} CrowdnerStatus;

// Opaque trained tagger.
typedef struct CrowdnerTagger CrowdnerTagger;

// Entity-level scores.
typedef struct CrowdnerEval {
  double precision;
  double recall;
  double f1;
  uint64_t gold;
  uint64_t predicted;
  uint64_t correct;
} CrowdnerEval;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the
// next call into this library on the same thread.
const char *crowdner_last_error(void);

// Library version as a static string.
const char *crowdner_version(void);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void crowdner_string_free(char *s);

// Loads a checkpoint written by `crowdner train`.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum CrowdnerStatus crowdner_tagger_load(const char *path, struct CrowdnerTagger **out);

// Releases a tagger. Null is ignored.
//
// # Safety
// `tagger` must come from [`crowdner_tagger_load`] and not have been freed.
void crowdner_tagger_free(struct CrowdnerTagger *tagger);

// Tags one sentence. `*labels` receives one label per character separated
// by single spaces, e.g. `"O B-PER E-PER"`; free it with
// [`crowdner_string_free`].
//
// # Safety
// `tagger` must be a live handle, `text` a NUL-terminated UTF-8 string and
// `labels` writable.
enum CrowdnerStatus crowdner_tagger_tag(const struct CrowdnerTagger *tagger,
                                        const char *text,
                                        char **labels);

// Scores the tagger on a gold corpus file.
//
// # Safety
// `tagger` must be a live handle, `gold_path` a NUL-terminated string and
// `out` writable.
enum CrowdnerStatus crowdner_tagger_evaluate(const struct CrowdnerTagger *tagger,
                                             const char *gold_path,
                                             struct CrowdnerEval *out);

// Majority-votes a crowd corpus file into `out_path`.
//
// # Safety
// Both paths must be NUL-terminated strings.
enum CrowdnerStatus crowdner_vote_file(const char *in_path, const char *out_path);

// Best label path under a linear-chain CRF. `emissions` is row-major
// `len x num_labels`; `transitions` is row-major `(num_labels + 2)^2`,
// indexed `[prev][next]` with BOS at `num_labels` and EOS at
// `num_labels + 1`. `path` must hold `len` entries.
//
// # Safety
// Pointers must be valid for the stated sizes.
enum CrowdnerStatus crowdner_crf_viterbi(const double *emissions,
                                         size_t len,
                                         size_t num_labels,
                                         const double *transitions,
                                         size_t *path,
                                         double *score);

// Log partition function with the layout of [`crowdner_crf_viterbi`].
//
// # Safety
// Pointers must be valid for the stated sizes.
enum CrowdnerStatus crowdner_crf_log_partition(const double *emissions,
                                               size_t len,
                                               size_t num_labels,
                                               const double *transitions,
                                               double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CROWDNER_H */
