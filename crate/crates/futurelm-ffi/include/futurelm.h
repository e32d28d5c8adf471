/* C ABI for the futurelm toolkit.
 *
 * Status codes: 0 success, 1 invalid argument, 2 runtime failure.
 * After a failure, flm_last_error() returns a thread-local message that
 * stays valid until the next failing call on the same thread.
 *
 * This header is maintained by hand; keep it in sync with src/lib.rs.
 */

#ifndef FUTURELM_H
#define FUTURELM_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#define FLM_OK 0
#define FLM_INVALID_ARGUMENT 1
#define FLM_RUNTIME_ERROR 2

/* Opaque handle: a language model plus its vocabulary. */
typedef struct FlmModel FlmModel;

/* Message for the most recent failure on this thread. */
const char *flm_last_error(void);

/* Load a checkpoint produced by `futurelm train`. On success, *out owns
 * the model; release it with flm_model_free. */
int32_t flm_model_load(const char *path, FlmModel **out);

/* Release a model handle. NULL is a no-op. */
void flm_model_free(FlmModel *model);

/* Vocabulary size of a loaded model. */
int32_t flm_model_vocab_size(const FlmModel *model, size_t *out);

/* Next-token distribution after `prefix` (token ids, no sentinel).
 * out_probs must hold flm_model_vocab_size doubles; they sum to 1. */
int32_t flm_next_token_dist(const FlmModel *model,
                            const uint32_t *prefix, size_t prefix_len,
                            double *out_probs);

/* Generate up to `cap` tokens with the default decoding settings and the
 * given seed. The number of tokens written is stored in *out_len. */
int32_t flm_generate(const FlmModel *model, int32_t year, uint64_t seed,
                     uint32_t *out_tokens, size_t cap, size_t *out_len);

/* Render token ids as space-separated words into buf (NUL-terminated).
 * *out_len receives the untruncated string length, excluding the NUL;
 * if *out_len >= cap the output was truncated. */
int32_t flm_decode_text(const FlmModel *model,
                        const uint32_t *tokens, size_t n_tokens,
                        char *buf, size_t cap, size_t *out_len);

/* Alignment-based similarity of two token sequences in [0, 1].
 * Returns -1.0 if a length is nonzero but its pointer is NULL. */
double flm_meteor(const uint32_t *a, size_t a_len,
                  const uint32_t *b, size_t b_len);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* FUTURELM_H */
