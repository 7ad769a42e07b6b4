#ifndef STEMGATE_H
#define STEMGATE_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum StemgateStatus {
  STEMGATE_STATUS_OK = 0,
  STEMGATE_STATUS_NULL_POINTER = 1,
  STEMGATE_STATUS_INVALID_UTF8 = 2,
  STEMGATE_STATUS_INVALID_ARGUMENT = 3,
  STEMGATE_STATUS_PIPELINE_ERROR = 4,
  STEMGATE_STATUS_IO_ERROR = 5,
  STEMGATE_STATUS_PANIC = 6,
} StemgateStatus;

/**
 * An agent plus the runtime that drives it.
 */
typedef struct StemgateAgent StemgateAgent;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Creates an agent. `config_json` may be null for defaults; otherwise it
 * is an agent configuration document.
 *
 * # Safety
 * `config_json` is null or a valid C string; `out` is a valid pointer.
 */
enum StemgateStatus stemgate_agent_new(const char *config_json, struct StemgateAgent **out);

/**
 * # Safety
 * `agent` is null or a handle from [`stemgate_agent_new`] not yet freed.
 */
void stemgate_agent_free(struct StemgateAgent *agent);

/**
 * Runs one message through the pipeline and waits for learning to finish.
 * Writes the pipeline result as JSON.
 *
 * # Safety
 * Pointers are valid; strings are NUL-terminated.
 */
enum StemgateStatus stemgate_agent_run(struct StemgateAgent *agent,
                                       const char *caller_id,
                                       const char *message,
                                       char **out_json);

/**
 * # Safety
 * Pointers are valid; strings are NUL-terminated.
 */
enum StemgateStatus stemgate_agent_profile_json(struct StemgateAgent *agent,
                                                const char *caller_id,
                                                char **out_json);

/**
 * # Safety
 * Pointers are valid.
 */
enum StemgateStatus stemgate_agent_skills_json(struct StemgateAgent *agent, char **out_json);

/**
 * Registers a plugin skill; writes the stored skill as JSON.
 *
 * # Safety
 * Pointers are valid; strings are NUL-terminated.
 */
enum StemgateStatus stemgate_agent_register_plugin(struct StemgateAgent *agent,
                                                   const char *definition_json,
                                                   char **out_json);

/**
 * Deletes everything held about a caller; writes the deletion counts.
 *
 * # Safety
 * Pointers are valid; strings are NUL-terminated.
 */
enum StemgateStatus stemgate_agent_forget_caller(struct StemgateAgent *agent,
                                                 const char *caller_id,
                                                 char **out_json);

/**
 * # Safety
 * Pointers are valid; strings are NUL-terminated.
 */
enum StemgateStatus stemgate_agent_checkpoint(struct StemgateAgent *agent, const char *dir);

/**
 * One EMA step, `(1 - alpha) * current + alpha * signal`.
 *
 * # Safety
 * `out` is a valid pointer.
 */
enum StemgateStatus stemgate_update_dimension(double current,
                                              double signal,
                                              double alpha,
                                              double *out);

/**
 * Profile confidence after `n` interactions, `n / (n + kappa)`.
 */
double stemgate_confidence(uint64_t n, double kappa);

/**
 * Message for the last failed call on this thread, or null. Valid until
 * the next stemgate call on the same thread; do not free.
 */
const char *stemgate_last_error_message(void);

/**
 * # Safety
 * `s` is null or a string returned by this library, freed at most once.
 */
void stemgate_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STEMGATE_H */
