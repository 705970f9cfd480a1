/* C interface for collaborative two-graph path reasoning. */

#pragma once

/* Generated with cbindgen:0.27.0 */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Outcome of a C API call. `COPATH_STATUS_OK` is zero; every other value
// signals failure and leaves a message for `copath_last_error_message`.
typedef enum CopathStatus {
  COPATH_STATUS_OK = 0,
  // A required pointer argument was null.
  COPATH_STATUS_NULL_POINTER = 1,
  // A string argument was not valid UTF-8.
  COPATH_STATUS_UTF8 = 2,
  // Input values were malformed or inconsistent.
  COPATH_STATUS_INVALID_INPUT = 3,
  // A structured file or JSON document failed to parse.
  COPATH_STATUS_PARSE = 4,
  // Filesystem access failed.
  COPATH_STATUS_IO = 5,
  // A non-finite value surfaced inside numeric code.
  COPATH_STATUS_NUMERIC = 6,
  // A file carries a format version this build does not support.
  COPATH_STATUS_UNSUPPORTED_VERSION = 7,
  // The library panicked; state may be inconsistent.
  COPATH_STATUS_PANIC = 8,
} CopathStatus;

// A trained model plus the vocabulary its embedding rows index.
typedef struct CopathModel CopathModel;

// An ordered list of reasoning tasks (two graphs, a query utterance, and
// reference descriptions each).
typedef struct CopathTasks CopathTasks;

// Word vectors used to seed embedding tables.
typedef struct CopathVectors CopathVectors;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string. Never null; do not
// free.
const char *copath_version(void);

// Message for the most recent failure on the calling thread, or null if
// the last call succeeded. Valid until the next library call on the same
// thread; do not free.
const char *copath_last_error_message(void);

// Free a string returned by this library. Null is a no-op.
//
// # Safety
// `s` must have been returned by a `copath_*` call that documents
// `copath_string_free` as its deallocator, and not freed before.
void copath_string_free(char *s);

// Unigram-overlap score of `candidate` against `reference`, written to
// `out_score`. `recall` selects recall instead of balanced F1.
//
// # Safety
// `candidate` and `reference` must be NUL-terminated strings; `out_score`
// must be valid for a write.
enum CopathStatus copath_rouge1(const char *candidate,
                                const char *reference,
                                bool recall,
                                double *out_score);

// Join two serialized paths and a query utterance into one answer string.
// The result goes to `out_answer`; free it with `copath_string_free`.
//
// # Safety
// The three inputs must be NUL-terminated strings; `out_answer` must be
// valid for a pointer write.
enum CopathStatus copath_assemble_answer(const char *path_v,
                                         const char *path_u,
                                         const char *utterance,
                                         char **out_answer);

// Generate `count` synthetic tasks with a planted walk of `horizon` steps
// through graphs of `nodes` entities and `branching` outgoing planted-or-
// distractor edges per walk node. Instance seeds derive from `base_seed`.
// The new handle goes to `out_tasks`; free it with `copath_tasks_free`.
//
// # Safety
// `out_tasks` must be valid for a pointer write.
enum CopathStatus copath_tasks_generate(size_t nodes,
                                        size_t branching,
                                        size_t horizon,
                                        uint64_t base_seed,
                                        size_t count,
                                        struct CopathTasks **out_tasks);

// Load tasks from a JSON-lines file written by `copath_tasks_save` (or
// the CLI). Free the handle with `copath_tasks_free`.
//
// # Safety
// `path` must be a NUL-terminated string; `out_tasks` must be valid for a
// pointer write.
enum CopathStatus copath_tasks_load(const char *path, struct CopathTasks **out_tasks);

// Write tasks as one JSON object per line.
//
// # Safety
// `tasks` must be a live tasks handle; `path` must be a NUL-terminated
// string.
enum CopathStatus copath_tasks_save(const struct CopathTasks *tasks, const char *path);

// Number of tasks behind the handle, written to `out_len`.
//
// # Safety
// `tasks` must be a live tasks handle; `out_len` must be valid for a
// write.
enum CopathStatus copath_tasks_len(const struct CopathTasks *tasks, size_t *out_len);

// Destroy a tasks handle. Null is a no-op.
//
// # Safety
// `tasks` must have come from a `copath_tasks_*` constructor and not be
// freed twice.
void copath_tasks_free(struct CopathTasks *tasks);

// Derive deterministic `dim`-dimensional word vectors covering every name
// and reference token in `tasks`. Free the handle with
// `copath_vectors_free`.
//
// # Safety
// `tasks` must be a live tasks handle; `out_vectors` must be valid for a
// pointer write.
enum CopathStatus copath_vectors_synth(const struct CopathTasks *tasks,
                                       size_t dim,
                                       struct CopathVectors **out_vectors);

// Load whitespace-separated word vectors (`token v1 v2 ...`, one per
// line). Free the handle with `copath_vectors_free`.
//
// # Safety
// `path` must be a NUL-terminated string; `out_vectors` must be valid for
// a pointer write.
enum CopathStatus copath_vectors_load(const char *path, struct CopathVectors **out_vectors);

// Destroy a vectors handle. Null is a no-op.
//
// # Safety
// `vectors` must have come from a `copath_vectors_*` constructor and not
// be freed twice.
void copath_vectors_free(struct CopathVectors *vectors);

// Train a model. `config_json` configures training (null or empty uses
// defaults; unknown keys are rejected). The last `val_count` tasks become
// the validation split. Free the handle with `copath_model_free`.
//
// # Safety
// `config_json`, when non-null, must be a NUL-terminated string; `tasks`
// and `vectors` must be live handles; `out_model` must be valid for a
// pointer write.
enum CopathStatus copath_train(const char *config_json,
                               const struct CopathTasks *tasks,
                               size_t val_count,
                               const struct CopathVectors *vectors,
                               struct CopathModel **out_model);

// Load a model checkpoint. Free the handle with `copath_model_free`.
//
// # Safety
// `path` must be a NUL-terminated string; `out_model` must be valid for a
// pointer write.
enum CopathStatus copath_model_load(const char *path, struct CopathModel **out_model);

// Write a model checkpoint. The same model always writes identical bytes.
//
// # Safety
// `model` must be a live model handle; `path` must be a NUL-terminated
// string.
enum CopathStatus copath_model_save(const struct CopathModel *model, const char *path);

// Total trainable parameter count, written to `out_count`.
//
// # Safety
// `model` must be a live model handle; `out_count` must be valid for a
// write.
enum CopathStatus copath_model_param_count(const struct CopathModel *model, size_t *out_count);

// Hash of the training configuration that produced this model, written to
// `out_hash`; free it with `copath_string_free`.
//
// # Safety
// `model` must be a live model handle; `out_hash` must be valid for a
// pointer write.
enum CopathStatus copath_model_config_hash(const struct CopathModel *model, char **out_hash);

// Destroy a model handle. Null is a no-op.
//
// # Safety
// `model` must have come from a `copath_model_*` or `copath_train`
// constructor and not be freed twice.
void copath_model_free(struct CopathModel *model);

// Greedily decode every task and write the evaluation report as a JSON
// document to `out_json`; free it with `copath_string_free`. The model's
// stored wiring decides which sides act. `with_oracle` additionally
// brute-forces each instance's reward ceiling.
//
// # Safety
// `model`, `tasks`, and `vectors` must be live handles; `out_json` must
// be valid for a pointer write.
enum CopathStatus copath_evaluate_json(const struct CopathModel *model,
                                       const struct CopathTasks *tasks,
                                       const struct CopathVectors *vectors,
                                       size_t horizon,
                                       bool with_oracle,
                                       char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus
