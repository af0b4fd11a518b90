#ifndef SAMPLE_SELECT_H
#define SAMPLE_SELECT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result codes shared by all functions.
 */
typedef enum SsStatus {
  SS_STATUS_OK = 0,
  SS_STATUS_NULL_POINTER = 1,
  SS_STATUS_INVALID_UTF8 = 2,
  SS_STATUS_INVALID_ARGUMENT = 3,
  SS_STATUS_CONFIG_ERROR = 4,
  SS_STATUS_RUN_ERROR = 5,
  SS_STATUS_PANIC = 6,
} SsStatus;

/**
 * Opaque decoder built from a TOML configuration.
 */
typedef struct SsDecoder SsDecoder;

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next call into this library on the same thread.
 */
const char *ss_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ss_version(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed already.
 */
void ss_string_free(char *s);

/**
 * Normalizes spacing and strips share boilerplate from an article.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be writable.
 */
enum SsStatus ss_clean_article(const char *text, char **out);

/**
 * Splits text into sentences, returned as a JSON array of strings.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be writable.
 */
enum SsStatus ss_split_sentences_json(const char *text, char **out);

/**
 * Overlap score of each of `n` samples against the whole set. A sample
 * without word tokens gets NaN.
 *
 * # Safety
 * `samples` must point to `n` NUL-terminated strings and `out_scores` to
 * room for `n` doubles.
 */
enum SsStatus ss_overlap_scores(const char *const *samples, size_t n, double *out_scores);

/**
 * ROUGE-1 F1 between a candidate and a reference.
 *
 * # Safety
 * Both strings must be NUL-terminated; `out` must be writable.
 */
enum SsStatus ss_rouge1_f1(const char *candidate, const char *reference, double *out);

/**
 * Grammaticality under the built-in offline tagger.
 *
 * # Safety
 * `sentence` must be NUL-terminated; `out` must be writable.
 */
enum SsStatus ss_is_grammatical_heuristic(const char *sentence, bool *out);

/**
 * Builds a decoder from TOML configuration text (the same format the CLI
 * reads). Release it with [`ss_decoder_free`].
 *
 * # Safety
 * `config_toml` must be NUL-terminated; `out` must be writable.
 */
enum SsStatus ss_decoder_new(const char *config_toml, struct SsDecoder **out);

/**
 * Summarizes one document and writes its output line (JSON) to `out`.
 * `reference` may be null. When decoding fails the line is still written,
 * carrying an `error` field, and the call returns the run-error status.
 *
 * # Safety
 * `decoder` must come from [`ss_decoder_new`]; strings must be
 * NUL-terminated; `out` must be writable.
 */
enum SsStatus ss_decoder_summarize(const struct SsDecoder *decoder,
                                   const char *document_id,
                                   const char *article,
                                   const char *reference,
                                   char **out);

/**
 * Releases a decoder. Null is ignored.
 *
 * # Safety
 * `decoder` must come from [`ss_decoder_new`] and not be used afterwards.
 */
void ss_decoder_free(struct SsDecoder *decoder);

#endif  /* SAMPLE_SELECT_H */
