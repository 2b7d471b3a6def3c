#ifndef SELAMR_H
#define SELAMR_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result codes. Zero is success.
 */
typedef enum SelamrStatus {
  SELAMR_STATUS_OK = 0,
  SELAMR_STATUS_NULL_POINTER = 1,
  SELAMR_STATUS_INVALID_STRING = 2,
  SELAMR_STATUS_DIMENSION = 3,
  SELAMR_STATUS_DOMAIN = 4,
  SELAMR_STATUS_CONTRACT = 5,
  SELAMR_STATUS_DEGENERATE_ROW = 6,
  SELAMR_STATUS_LENGTH = 7,
  SELAMR_STATUS_CONNECTIVITY = 8,
  SELAMR_STATUS_STRATIFICATION = 9,
  SELAMR_STATUS_INVARIANT = 10,
  SELAMR_STATUS_PARSE = 11,
  SELAMR_STATUS_CONFIG = 12,
  SELAMR_STATUS_IO = 13,
  SELAMR_STATUS_OUT_OF_RANGE = 14,
  SELAMR_STATUS_PANIC = 15,
} SelamrStatus;

/*
 Run configuration.
 */
typedef struct SelamrConfig SelamrConfig;

/*
 Labelled signal records.
 */
typedef struct SelamrDataset SelamrDataset;

/*
 A trained model with its evaluation results.
 */
typedef struct SelamrModel SelamrModel;

/*
 Test-split metrics of a trained model.
 */
typedef struct SelamrMetrics {
  double accuracy;
  double macro_precision;
  /*
   Epoch whose parameters scored best on validation.
   */
  size_t best_epoch;
  double runtime_secs;
} SelamrMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread; empty after a success.
 The pointer stays valid until the next call on this thread.
 */
const char *selamr_last_error(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *selamr_version(void);

/*
 Default configuration.

 # Safety
 `out` must be a valid pointer to writable storage for one handle.
 */
enum SelamrStatus selamr_config_default(struct SelamrConfig **out_cfg);

/*
 Parses a TOML configuration; missing keys take their defaults.

 # Safety
 `toml` must be a NUL-terminated string and `out_cfg` writable.
 */
enum SelamrStatus selamr_config_from_toml(const char *toml, struct SelamrConfig **out_cfg);

/*
 # Safety
 `cfg` must be null or a handle from this library not yet freed.
 */
void selamr_config_free(struct SelamrConfig *cfg);

/*
 Synthesises the dataset described by the configuration's generator.

 # Safety
 `cfg` must be a live handle and `out_ds` writable.
 */
enum SelamrStatus selamr_dataset_generate(const struct SelamrConfig *cfg,
                                          uint64_t seed,
                                          struct SelamrDataset **out_ds);

/*
 Reads a SISO CSV or container file.

 # Safety
 `path` must be a NUL-terminated string and `out_ds` writable.
 */
enum SelamrStatus selamr_dataset_load(const char *path, struct SelamrDataset **out_ds);

/*
 Preprocesses every record in place with the configured pipeline.

 # Safety
 `ds` and `cfg` must be live handles.
 */
enum SelamrStatus selamr_dataset_preprocess(struct SelamrDataset *ds,
                                            const struct SelamrConfig *cfg);

/*
 Number of records.

 # Safety
 `ds` must be a live handle and `out_len` writable.
 */
enum SelamrStatus selamr_dataset_len(const struct SelamrDataset *ds, size_t *out_len);

/*
 Class id of record `index`, or -1 when it is unlabelled.

 # Safety
 `ds` must be a live handle and `out_label` writable.
 */
enum SelamrStatus selamr_dataset_label(const struct SelamrDataset *ds,
                                       size_t index,
                                       int32_t *out_label);

/*
 Nominal SNR (dB) of record `index`.

 # Safety
 `ds` must be a live handle and `out_snr` writable.
 */
enum SelamrStatus selamr_dataset_snr(const struct SelamrDataset *ds, size_t index, double *out_snr);

/*
 # Safety
 `ds` must be null or a handle from this library not yet freed.
 */
void selamr_dataset_free(struct SelamrDataset *ds);

/*
 Trains one seeded run on preprocessed records. `variant` is one of
 `full`, `dim-transform-instead-of-embedding`,
 `complete-graph-instead-of-knn`, `gat-only-instead-of-gat-lpa`, or null
 for the configured variant.

 # Safety
 `cfg` and `ds` must be live handles, `variant` null or a NUL-terminated
 string, and `out_model` writable.
 */
enum SelamrStatus selamr_train(const struct SelamrConfig *cfg,
                               const struct SelamrDataset *ds,
                               const char *variant,
                               uint64_t seed,
                               struct SelamrModel **out_model);

/*
 # Safety
 `model` must be a live handle and `out_metrics` writable.
 */
enum SelamrStatus selamr_model_metrics(const struct SelamrModel *model,
                                       struct SelamrMetrics *out_metrics);

/*
 Test accuracy over records with SNR of at least `min_db`. Fails with
 [`SelamrStatus::OutOfRange`] when no test record qualifies.

 # Safety
 `model` must be a live handle and `out_acc` writable.
 */
enum SelamrStatus selamr_model_accuracy_at_least(const struct SelamrModel *model,
                                                 double min_db,
                                                 double *out_acc);

/*
 Writes the model parameters as a checkpoint file.

 # Safety
 `model` must be a live handle and `path` a NUL-terminated string.
 */
enum SelamrStatus selamr_model_save(const struct SelamrModel *model, const char *path);

/*
 # Safety
 `model` must be null or a handle from this library not yet freed.
 */
void selamr_model_free(struct SelamrModel *model);

/*
 Macro-averaged precision of `n` aligned predictions and labels in
 `0..classes`. Classes never predicted contribute 0.

 # Safety
 `predicted` and `truth` must each point to `n` readable values (they may
 be null when `n` is 0) and `out_value` must be writable.
 */
enum SelamrStatus selamr_macro_precision(const size_t *predicted,
                                         const size_t *truth,
                                         size_t n,
                                         size_t classes,
                                         double *out_value);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SELAMR_H */
