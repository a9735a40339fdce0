#ifndef VISREASON_H
#define VISREASON_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result code of every fallible call.
 */
typedef enum VrStatus {
  VR_STATUS_OK = 0,
  /**
   * A required pointer argument was NULL.
   */
  VR_STATUS_NULL_ARGUMENT = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  VR_STATUS_INVALID_UTF8 = 2,
  /**
   * An argument was out of its valid range.
   */
  VR_STATUS_INVALID_ARGUMENT = 3,
  /**
   * Bad configuration or dataset; fix the input and retry.
   */
  VR_STATUS_USAGE = 4,
  /**
   * The run itself failed (I/O, backend, corrupt trajectory file).
   */
  VR_STATUS_RUNTIME = 5,
  /**
   * A Rust panic was caught at the boundary.
   */
  VR_STATUS_PANIC = 6,
} VrStatus;

/**
 * A configured pipeline, ready to run batches.
 */
typedef struct VrEngine VrEngine;

/**
 * An accuracy report from a run or a replay.
 */
typedef struct VrReport VrReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Description of the last failed call on this thread, or NULL if the last
 * call succeeded. The pointer stays valid until the next call on this thread.
 */
const char *vr_last_error(void);

/**
 * Weight of each relation of a subject holding `n_relations` relations.
 *
 * # Safety
 * `out` must be NULL or point to writable storage for a `double`.
 */
enum VrStatus vr_relation_weight(size_t n_relations, double gamma, uint32_t alpha, double *out);

/**
 * Joint entity-relation validity score.
 *
 * # Safety
 * `out` must be NULL or point to writable storage for a `double`.
 */
enum VrStatus vr_joint_validity_score(double score_e,
                                      double score_r,
                                      size_t n_relations,
                                      double gamma,
                                      uint32_t alpha,
                                      double *out);

/**
 * Negative log-likelihood of a sequence from its token log-probabilities.
 *
 * # Safety
 * `logprobs` must point to `len` readable doubles (it may be NULL when
 * `len` is 0); `out` must point to writable storage for a `double`.
 */
enum VrStatus vr_distillation_loss(const double *logprobs, size_t len, double *out);

/**
 * Extracts a validity score in [0, 1] from free-form judge text.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must point to a `double`.
 */
enum VrStatus vr_parse_score(const char *text, double *out);

/**
 * Canonical answer form used for matching. The result is released with
 * [`vr_string_free`].
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must point to a `char *`.
 */
enum VrStatus vr_normalize_answer(const char *text, char **out);

/**
 * Whether `predicted` matches any of `n_references` references after
 * normalization.
 *
 * # Safety
 * `predicted` must be a NUL-terminated string; `references` must point to
 * `n_references` NUL-terminated strings; `out` must point to a `bool`.
 */
enum VrStatus vr_reference_match(const char *predicted,
                                 const char *const *references,
                                 size_t n_references,
                                 bool *out);

/**
 * Releases a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must be NULL or a string returned by this library, not yet freed.
 */
void vr_string_free(char *s);

/**
 * Loads a config file and builds its backends.
 *
 * # Safety
 * `config_path` must be a NUL-terminated string; `out` must point to a
 * `VrEngine *`. The engine is released with [`vr_engine_free`].
 */
enum VrStatus vr_engine_open(const char *config_path, struct VrEngine **out);

/**
 * Runs every sample of a dataset, writing trajectories and reports into
 * `out_dir`. Image paths resolve against the dataset's directory.
 *
 * # Safety
 * `engine` must come from [`vr_engine_open`]; the paths must be
 * NUL-terminated strings; `out` must point to a `VrReport *`, released with
 * [`vr_report_free`].
 */
enum VrStatus vr_engine_run_batch(const struct VrEngine *engine,
                                  const char *dataset_path,
                                  const char *out_dir,
                                  struct VrReport **out);

/**
 * Releases an engine. NULL is ignored.
 *
 * # Safety
 * `engine` must be NULL or come from [`vr_engine_open`], not yet freed.
 */
void vr_engine_free(struct VrEngine *engine);

/**
 * Recomputes the report of a trajectory file with its recorded metric.
 *
 * # Safety
 * `trajectories` must be a NUL-terminated string; `out` must point to a
 * `VrReport *`, released with [`vr_report_free`].
 */
enum VrStatus vr_replay(const char *trajectories, struct VrReport **out);

/**
 * Number of samples in the report; 0 for NULL.
 *
 * # Safety
 * `report` must be NULL or a live report handle.
 */
size_t vr_report_sample_count(const struct VrReport *report);

/**
 * Samples that were answered but never judged correct; 0 for NULL.
 *
 * # Safety
 * `report` must be NULL or a live report handle.
 */
size_t vr_report_unresolved(const struct VrReport *report);

/**
 * Samples that failed before producing an answer; 0 for NULL.
 *
 * # Safety
 * `report` must be NULL or a live report handle.
 */
size_t vr_report_stage_failures(const struct VrReport *report);

/**
 * Overall accuracy as the percentage string written to the report (for
 * example "80.0"). Writes NULL when the report holds no samples.
 *
 * # Safety
 * `report` must be a live report handle; `out` must point to a `char *`.
 */
enum VrStatus vr_report_accuracy(const struct VrReport *report, char **out);

/**
 * The full report as JSON, identical to report.json minus the trailing
 * newline.
 *
 * # Safety
 * `report` must be a live report handle; `out` must point to a `char *`.
 */
enum VrStatus vr_report_to_json(const struct VrReport *report, char **out);

/**
 * Releases a report. NULL is ignored.
 *
 * # Safety
 * `report` must be NULL or a report handle from this library, not yet freed.
 */
void vr_report_free(struct VrReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VISREASON_H */
