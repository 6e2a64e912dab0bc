#ifndef SSPARSE_H
#define SSPARSE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

typedef enum SsparseStatus {
  SSPARSE_STATUS_OK = 0,
  SSPARSE_STATUS_NULL_ARGUMENT = 1,
  SSPARSE_STATUS_INVALID_UTF8 = 2,
  SSPARSE_STATUS_INVALID_ARGUMENT = 3,
  SSPARSE_STATUS_GRAMMAR_ERROR = 4,
  SSPARSE_STATUS_MTHEORY_ERROR = 5,
  SSPARSE_STATUS_PARSE_ERROR = 6,
  SSPARSE_STATUS_QUERY_ERROR = 7,
  SSPARSE_STATUS_BRIDGE_ERROR = 8,
  SSPARSE_STATUS_CONFLATION_ERROR = 9,
  SSPARSE_STATUS_PANIC = 10,
} SsparseStatus;

typedef enum SsparseTreeFormat {
  SSPARSE_TREE_FORMAT_BRACKETED = 0,
  SSPARSE_TREE_FORMAT_ASCII = 1,
  SSPARSE_TREE_FORMAT_JSON = 2,
} SsparseTreeFormat;

typedef enum SsparseMode {
  SSPARSE_MODE_LITERAL = 0,
  SSPARSE_MODE_NORMALIZED = 1,
} SsparseMode;

/**
 * A loaded grammar.
 */
typedef struct SsparseGrammar SsparseGrammar;

/**
 * A loaded, validated MTheory.
 */
typedef struct SsparseMtheory SsparseMtheory;

/**
 * A grammar bridged to a knowledge base.
 */
typedef struct SsparseSemanticParser SsparseSemanticParser;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until
 * the next call into the library from the same thread.
 */
const char *ssparse_last_error(void);

/**
 * Library version as a static string.
 */
const char *ssparse_version(void);

/**
 * Releases a string returned by the library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void ssparse_string_free(char *s);

/**
 * Parses grammar file text.
 *
 * # Safety
 * `source` must be a NUL-terminated string; `out` must be writable.
 */
enum SsparseStatus ssparse_grammar_load(const char *source, struct SsparseGrammar **out);

/**
 * # Safety
 * `grammar` must come from [`ssparse_grammar_load`] and not have been freed.
 */
void ssparse_grammar_free(struct SsparseGrammar *grammar);

/**
 * Number of nonterminals whose rule probabilities do not sum to one.
 *
 * # Safety
 * `grammar` must be a live handle; `out_count` must be writable.
 */
enum SsparseStatus ssparse_grammar_normalization_violations(const struct SsparseGrammar *grammar,
                                                            size_t *out_count);

/**
 * Viterbi parse of a whitespace-separated sentence. `out_tree` receives
 * the rendered tree; `out_probability` may be null.
 *
 * # Safety
 * Pointers must be valid; `out_tree` must be writable.
 */
enum SsparseStatus ssparse_parse(const struct SsparseGrammar *grammar,
                                 const char *sentence,
                                 enum SsparseTreeFormat format,
                                 char **out_tree,
                                 double *out_probability);

/**
 * Total probability of the sentence under the grammar.
 *
 * # Safety
 * Pointers must be valid; `out_probability` must be writable.
 */
enum SsparseStatus ssparse_inside(const struct SsparseGrammar *grammar,
                                  const char *sentence,
                                  double *out_probability);

/**
 * Parses and validates an MTheory JSON document.
 *
 * # Safety
 * `source` must be a NUL-terminated string; `out` must be writable.
 */
enum SsparseStatus ssparse_mtheory_load(const char *source, struct SsparseMtheory **out);

/**
 * # Safety
 * `theory` must come from [`ssparse_mtheory_load`] and not have been freed.
 */
void ssparse_mtheory_free(struct SsparseMtheory *theory);

/**
 * Posterior of `variable` (`name(a, b)`). `evidence` may be null or hold
 * one `name(args)=STATE` per line. The result is JSON:
 * `{"variable": ..., "states": [...], "posterior": [...]}`.
 *
 * # Safety
 * Pointers must be valid; `out_json` must be writable.
 */
enum SsparseStatus ssparse_query(const struct SsparseMtheory *theory,
                                 const char *variable,
                                 const char *evidence,
                                 uint32_t depth_limit,
                                 char **out_json);

/**
 * Bridges `theory` to `grammar`. Both handles stay owned by the caller.
 *
 * # Safety
 * Handles must be live; `out` must be writable.
 */
enum SsparseStatus ssparse_semantic_parser_new(const struct SsparseGrammar *grammar,
                                               const struct SsparseMtheory *theory,
                                               struct SsparseSemanticParser **out);

/**
 * # Safety
 * `parser` must come from [`ssparse_semantic_parser_new`] and not have
 * been freed.
 */
void ssparse_semantic_parser_free(struct SsparseSemanticParser *parser);

/**
 * Parse with knowledge-base attachment decisions. `out_probability` and
 * `out_trace_json` may be null.
 *
 * # Safety
 * Pointers must be valid; `out_tree` must be writable.
 */
enum SsparseStatus ssparse_sparse(const struct SsparseSemanticParser *parser,
                                  const char *sentence,
                                  enum SsparseMode mode,
                                  uint32_t depth_limit,
                                  enum SsparseTreeFormat format,
                                  char **out_tree,
                                  double *out_probability,
                                  char **out_trace_json);

/**
 * `p q / (p q + (1 - p)(1 - q))`.
 *
 * # Safety
 * `out` must be writable.
 */
enum SsparseStatus ssparse_conflate(double p, double q, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SSPARSE_H */
