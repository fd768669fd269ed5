#ifndef CAPFI_H
#define CAPFI_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

// Result code of every fallible call.
typedef enum CapfiStatus {
  CAPFI_STATUS_OK = 0,
  CAPFI_STATUS_NULL_ARGUMENT = 1,
  CAPFI_STATUS_INVALID_ARGUMENT = 2,
  CAPFI_STATUS_IO = 3,
  CAPFI_STATUS_DATASET = 4,
  CAPFI_STATUS_MODEL = 5,
  CAPFI_STATUS_ENGINE = 6,
  // The metric is undefined on the given batch (AUC with one class).
  CAPFI_STATUS_UNDEFINED = 7,
  CAPFI_STATUS_PANIC = 8,
} CapfiStatus;

// A loaded or generated manifest.
typedef struct CapfiManifest CapfiManifest;

// A trained builtin surrogate.
typedef struct CapfiModel CapfiModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until
// the next call into the library on the same thread.
const char *capfi_last_error(void);

// Static, NUL-terminated version string.
const char *capfi_version(void);

// # Safety
// `s` must come from this library and not have been freed.
void capfi_string_free(char *s);

// Load a manifest (JSON, optional sidecar next to it).
//
// # Safety
// `path` is a NUL-terminated string; `out` is writable.
enum CapfiStatus capfi_manifest_load(const char *path, struct CapfiManifest **out);

// Generate a synthetic manifest from a generator spec given as JSON text.
//
// # Safety
// `spec_json` is a NUL-terminated string; `out` is writable.
enum CapfiStatus capfi_manifest_generate(const char *spec_json, struct CapfiManifest **out);

// Number of samples; 0 for a null handle.
//
// # Safety
// `m` is null or a live manifest handle.
size_t capfi_manifest_len(const struct CapfiManifest *m);

// # Safety
// `m` is null or a manifest handle not yet freed.
void capfi_manifest_free(struct CapfiManifest *m);

// Cardinality of a context notation or set expression.
//
// # Safety
// `m` is a live handle, `expr` a NUL-terminated string, `out` writable.
enum CapfiStatus capfi_context_cardinality(const struct CapfiManifest *m,
                                           const char *expr,
                                           size_t *out);

// Train the builtin surrogate on every modality. `context` may be null to
// use all samples. `epochs == 0` and `l2 < 0` select the defaults.
//
// # Safety
// `m` is a live handle, `context` null or NUL-terminated, `out` writable.
enum CapfiStatus capfi_model_train(const struct CapfiManifest *m,
                                   const char *context,
                                   size_t epochs,
                                   double l2,
                                   uint64_t seed,
                                   struct CapfiModel **out);

// Load a weight dump written by `capfi train`.
//
// # Safety
// `path` is NUL-terminated; `out` writable.
enum CapfiStatus capfi_model_load(const char *path, struct CapfiModel **out);

// Input width of the model; 0 for a null handle.
//
// # Safety
// `model` is null or a live handle.
size_t capfi_model_dim(const struct CapfiModel *model);

// Score `n_rows` row-major rows of width `dim` into `out`.
//
// # Safety
// `rows` holds `n_rows * dim` doubles and `out` room for `n_rows`.
enum CapfiStatus capfi_model_predict(const struct CapfiModel *model,
                                     const double *rows,
                                     size_t n_rows,
                                     size_t dim,
                                     double *out);

// # Safety
// `model` is null or a handle not yet freed.
void capfi_model_free(struct CapfiModel *model);

// Run the importance analysis for one model over every modality and all
// three metrics, writing the structured report as a newly allocated JSON
// string. `contexts` is a comma list of notations or expressions, or null
// for the 17 base sets. `repetitions == 0` uses each context's cardinality.
//
// # Safety
// Handles are live, `contexts` null or NUL-terminated, `out_json` writable.
enum CapfiStatus capfi_importance_run(const struct CapfiManifest *m,
                                      const struct CapfiModel *model,
                                      const char *contexts,
                                      uint64_t seed,
                                      size_t repetitions,
                                      char **out_json);

// Accuracy at the 0.5 threshold. Labels are 0 or nonzero.
//
// # Safety
// `scores` and `labels` hold `n` elements; `out` is writable.
enum CapfiStatus capfi_accuracy(const double *scores, const uint8_t *labels, size_t n, double *out);

// ROC AUC with mid-rank ties. `CAPFI_STATUS_UNDEFINED` for one class.
//
// # Safety
// As [`capfi_accuracy`].
enum CapfiStatus capfi_auc(const double *scores, const uint8_t *labels, size_t n, double *out);

// F1 at the 0.5 threshold; 1 when there is nothing to find.
//
// # Safety
// As [`capfi_accuracy`].
enum CapfiStatus capfi_f1(const double *scores, const uint8_t *labels, size_t n, double *out);

// `(d[0] - d[dt]) / dt` over a distance series of length `n`.
//
// # Safety
// `distances` holds `n` doubles; `out` is writable.
enum CapfiStatus capfi_proximity_change_rate(const double *distances,
                                             size_t n,
                                             size_t dt,
                                             double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CAPFI_H */
