#ifndef DROIDFLOW_H
#define DROIDFLOW_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DfStatus {
  DF_STATUS_OK = 0,
  DF_STATUS_NULL_POINTER = 1,
  DF_STATUS_INVALID_UTF8 = 2,
  DF_STATUS_IO = 3,
  DF_STATUS_PARSE = 4,
  DF_STATUS_CONFIG = 5,
  DF_STATUS_MODEL_MISMATCH = 6,
  DF_STATUS_METRICS = 7,
  DF_STATUS_DIVERGED = 8,
  DF_STATUS_PANIC = 9,
} DfStatus;

/**
 * Features extracted from one app.
 */
typedef struct DfFeatures DfFeatures;

/**
 * A loaded classifier.
 */
typedef struct DfModel DfModel;

/**
 * Metric report for a labeled score vector.
 */
typedef struct DfMetrics {
  double accuracy;
  double precision;
  double recall;
  double f1;
  double fpr;
  double fnr;
  /**
   * NaN when only one class is present.
   */
  double roc_auc;
  double prc_auc;
  uint64_t tp;
  uint64_t fp;
  uint64_t tn;
  uint64_t fn_;
} DfMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *df_version(void);

/**
 * Copies the calling thread's last error message into `buf` (NUL-terminated,
 * truncated to `len - 1` bytes). Returns the full message length.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t df_last_error(char *buf, size_t len);

/**
 * Loads a model file written by `droidflow train`.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum DfStatus df_model_load(const char *path, struct DfModel **out);

/**
 * # Safety
 * `model` must be null or a pointer from [`df_model_load`], freed once.
 */
void df_model_free(struct DfModel *model);

/**
 * Extracts features from an app directory or app JSON file using the
 * bundled analysis tables and default settings.
 *
 * # Safety
 * `app_path` must be a NUL-terminated string; `out` must be writable.
 */
enum DfStatus df_extract(const char *app_path, struct DfFeatures **out);

/**
 * Number of call traces found in the app.
 *
 * # Safety
 * `features` must be null or a live pointer from [`df_extract`].
 */
size_t df_features_trace_count(const struct DfFeatures *features);

/**
 * Number of nodes in the app's flow graph.
 *
 * # Safety
 * `features` must be null or a live pointer from [`df_extract`].
 */
size_t df_features_node_count(const struct DfFeatures *features);

/**
 * # Safety
 * `features` must be null or a pointer from [`df_extract`], freed once.
 */
void df_features_free(struct DfFeatures *features);

/**
 * Malicious-class probability of one app.
 *
 * # Safety
 * `model` and `features` must be live handles; `out` must be writable.
 */
enum DfStatus df_predict(const struct DfModel *model,
                         const struct DfFeatures *features,
                         double *out_malicious);

/**
 * Threshold metrics and curve areas. Labels are 0 (benign) or nonzero
 * (malicious).
 *
 * # Safety
 * `scores` and `labels` must point to `len` elements; `out` must be writable.
 */
enum DfStatus df_metrics(const double *scores,
                         const uint8_t *labels,
                         size_t len,
                         double threshold,
                         struct DfMetrics *out);

/**
 * Area under the ROC curve.
 *
 * # Safety
 * `scores` and `labels` must point to `len` elements; `out` must be writable.
 */
enum DfStatus df_roc_auc(const double *scores, const uint8_t *labels, size_t len, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DROIDFLOW_H */
