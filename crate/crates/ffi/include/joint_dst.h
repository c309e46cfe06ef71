#ifndef JOINT_DST_H
#define JOINT_DST_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum JdstStatus {
  JDST_STATUS_OK = 0,
  JDST_STATUS_NULL_POINTER = 1,
  JDST_STATUS_INVALID_UTF8 = 2,
  JDST_STATUS_INVALID_ARGUMENT = 3,
  JDST_STATUS_CHECKPOINT = 4,
  JDST_STATUS_IO = 5,
  JDST_STATUS_MODEL = 6,
  JDST_STATUS_PANIC = 7,
} JdstStatus;

/**
 * A loaded model. Sessions keep it alive, so it may be freed first.
 */
typedef struct JdstModel JdstModel;

/**
 * One dialogue in progress.
 */
typedef struct JdstSession JdstSession;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Loads a checkpoint file. On success `*out` owns the model.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum JdstStatus jdst_model_load(const char *path, struct JdstModel **out);

/**
 * # Safety
 * `model` must be null or a pointer from [`jdst_model_load`] not yet freed.
 */
void jdst_model_free(struct JdstModel *model);

/**
 * Number of scalar parameters, or 0 for a null model.
 *
 * # Safety
 * `model` must be null or a live model handle.
 */
size_t jdst_model_num_parameters(const struct JdstModel *model);

/**
 * Starts a dialogue.
 *
 * # Safety
 * `model` must be a live model handle and `out` a writable pointer.
 */
enum JdstStatus jdst_session_new(const struct JdstModel *model, struct JdstSession **out);

/**
 * Returns the session to the start of a dialogue.
 *
 * # Safety
 * `session` must be a live session handle.
 */
enum JdstStatus jdst_session_reset(struct JdstSession *session);

/**
 * # Safety
 * `session` must be null or a pointer from [`jdst_session_new`] not yet freed.
 */
void jdst_session_free(struct JdstSession *session);

/**
 * Processes one user turn.
 *
 * `system_acts` uses the REPL syntax, e.g. `offer(time=6 pm) request(date)`,
 * and may be empty. `utterance` is raw text. On success `*out_json` holds the
 * turn prediction as JSON: intent, acts, tokens, tags, decoded values, the
 * read-out state and the scored state. On failure the session is unchanged.
 *
 * # Safety
 * `session` must be a live session handle, both strings NUL-terminated and
 * `out_json` a writable pointer.
 */
enum JdstStatus jdst_session_turn(struct JdstSession *session,
                                  const char *system_acts,
                                  const char *utterance,
                                  char **out_json);

/**
 * Turns processed since the session started or was reset.
 *
 * # Safety
 * `session` must be null or a live session handle.
 */
size_t jdst_session_turns(const struct JdstSession *session);

/**
 * # Safety
 * `s` must be null or a string returned by this library, not yet freed.
 */
void jdst_string_free(char *s);

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next call into the library on the same thread.
 */
const char *jdst_last_error_message(void);

/**
 * Exact two-sided McNemar p-value for discordant counts `b` and `c`.
 */
double jdst_mcnemar(size_t b, size_t c);

/**
 * Scheduled-sampling keep probability at step `k`.
 *
 * # Safety
 * `out` must be a writable pointer.
 */
enum JdstStatus jdst_keep_probability(size_t k,
                                      size_t k_pre,
                                      size_t k_max,
                                      double p_min,
                                      double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* JOINT_DST_H */
