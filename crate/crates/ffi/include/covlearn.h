#ifndef COVLEARN_H
#define COVLEARN_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. Values 2-4 match the command-line exit codes.
 */
typedef enum CovlearnStatus {
  COVLEARN_STATUS_OK = 0,
  COVLEARN_STATUS_NULL_POINTER = 1,
  COVLEARN_STATUS_CONFIG_ERROR = 2,
  COVLEARN_STATUS_DATA_ERROR = 3,
  COVLEARN_STATUS_CONVERGENCE_FAILURE = 4,
  COVLEARN_STATUS_INVALID_UTF8 = 5,
  COVLEARN_STATUS_PANIC = 6,
} CovlearnStatus;

/**
 * A generated or loaded dataset.
 */
typedef struct CovlearnDataset CovlearnDataset;

/**
 * The result of one training run.
 */
typedef struct CovlearnReport CovlearnReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. Owned by the
 * library; valid until the next call on this thread.
 */
const char *covlearn_last_error_message(void);

/**
 * Releases a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void covlearn_string_free(char *s);

/**
 * Generates a dataset from a JSON spec document.
 *
 * # Safety
 * `spec_json` must be a NUL-terminated string; `out` must be writable.
 */
enum CovlearnStatus covlearn_dataset_generate(const char *spec_json, struct CovlearnDataset **out);

/**
 * Parses a dataset document.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum CovlearnStatus covlearn_dataset_from_json(const char *json, struct CovlearnDataset **out);

/**
 * Serializes a dataset; free the result with `covlearn_string_free`.
 *
 * # Safety
 * `dataset` must be a live handle; `out` must be writable.
 */
enum CovlearnStatus covlearn_dataset_to_json(const struct CovlearnDataset *dataset, char **out);

/**
 * Number of training and test trajectories.
 *
 * # Safety
 * `dataset` must be a live handle; outputs must be writable.
 */
enum CovlearnStatus covlearn_dataset_sizes(const struct CovlearnDataset *dataset,
                                           size_t *train,
                                           size_t *test);

/**
 * # Safety
 * `dataset` must be NULL or a live handle; it is invalid afterwards.
 */
void covlearn_dataset_free(struct CovlearnDataset *dataset);

/**
 * Trains on the dataset's training split.
 *
 * `method` is "ours", "nelder-mead" or "powell"; `bounds` is "tight" or
 * "loose"; `config_json` may be NULL for defaults.
 *
 * # Safety
 * String arguments must be NUL-terminated (or NULL where allowed);
 * `dataset` must be a live handle; `out` must be writable.
 */
enum CovlearnStatus covlearn_train(const struct CovlearnDataset *dataset,
                                   const char *method,
                                   const char *bounds,
                                   const char *config_json,
                                   struct CovlearnReport **out);

/**
 * Serializes a report; free the result with `covlearn_string_free`.
 *
 * # Safety
 * `report` must be a live handle; `out` must be writable.
 */
enum CovlearnStatus covlearn_report_to_json(const struct CovlearnReport *report, char **out);

/**
 * Learned parameters as a JSON object of class name to three variances.
 *
 * # Safety
 * `report` must be a live handle; `out` must be writable.
 */
enum CovlearnStatus covlearn_report_theta_json(const struct CovlearnReport *report, char **out);

/**
 * Eigenvalue spread of the learned parameters.
 *
 * # Safety
 * `report` must be a live handle; `out` must be writable.
 */
enum CovlearnStatus covlearn_report_spread(const struct CovlearnReport *report, double *out);

/**
 * # Safety
 * `report` must be NULL or a live handle; it is invalid afterwards.
 */
void covlearn_report_free(struct CovlearnReport *report);

/**
 * Mean test-split RMSE for the parameters in `theta_json`.
 *
 * # Safety
 * `dataset` must be a live handle, `theta_json` NUL-terminated and the
 * outputs writable.
 */
enum CovlearnStatus covlearn_evaluate(const struct CovlearnDataset *dataset,
                                      const char *theta_json,
                                      double *transl_rmse,
                                      double *rot_rmse);

/**
 * `out = Exp(tau)`; both are `[x, y, theta]` triples.
 *
 * # Safety
 * `tau` must point to 3 readable doubles and `out` to 3 writable ones.
 */
enum CovlearnStatus covlearn_se2_exp(const double *tau, double *out);

/**
 * `out = Log(pose)`.
 *
 * # Safety
 * `pose` must point to 3 readable doubles and `out` to 3 writable ones.
 */
enum CovlearnStatus covlearn_se2_log(const double *pose, double *out);

/**
 * `out = a ∘ b`.
 *
 * # Safety
 * `a` and `b` must point to 3 readable doubles and `out` to 3 writable ones.
 */
enum CovlearnStatus covlearn_se2_compose(const double *a, const double *b, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COVLEARN_H */
