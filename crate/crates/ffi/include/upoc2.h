#ifndef UPOC2_H
#define UPOC2_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum Upoc2Status {
  Upoc2Status_Ok = 0,
  Upoc2Status_InvalidArgument = 1,
  Upoc2Status_Io = 2,
  Upoc2Status_Format = 3,
  Upoc2Status_Internal = 4,
} Upoc2Status;

/**
 * A loaded model together with the corpus it decodes against.
 */
typedef struct Upoc2Model Upoc2Model;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the message from the most recent failure on this thread into
 * `buf` (NUL-terminated, truncated to `len`). Returns the full length.
 */
uintptr_t upoc2_last_error_message(char *buf, uintptr_t len);

/**
 * Load a checkpoint plus the data directory (corpus.jsonl,
 * features.bin, splits.json) that defines its vocabulary.
 *
 * On success `*out` owns the model; release it with
 * `upoc2_model_free`.
 */
enum Upoc2Status upoc2_model_open(const char *ckpt_path,
                                  const char *data_dir,
                                  struct Upoc2Model **out);

/**
 * Release a model handle. NULL is a no-op.
 */
void upoc2_model_free(struct Upoc2Model *model);

/**
 * Translate the source sentence of the triplet `id` and write the
 * space-joined target tokens into `buf` (NUL-terminated, truncated to
 * `len`). Returns the required buffer size through `out_len`.
 */
enum Upoc2Status upoc2_translate_id(const struct Upoc2Model *model,
                                    const char *id,
                                    char *buf,
                                    uintptr_t len,
                                    uintptr_t *out_len);

/**
 * Corpus-level BLEU-4 over whitespace-tokenized segment strings.
 * `hyps` and `refs` are parallel arrays of length `n`.
 */
enum Upoc2Status upoc2_bleu(const char *const *hyps,
                            const char *const *refs,
                            uintptr_t n,
                            double *out);

/**
 * Corpus-level CIDEr over whitespace-tokenized segment strings.
 */
enum Upoc2Status upoc2_cider(const char *const *hyps,
                             const char *const *refs,
                             uintptr_t n,
                             double *out);

/**
 * Generate a synthetic corpus (corpus.jsonl, features.bin,
 * splits.json) under `out_dir`.
 */
enum Upoc2Status upoc2_gen_synthetic(const char *out_dir, uintptr_t n_triplets, uint64_t seed);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* UPOC2_H */
