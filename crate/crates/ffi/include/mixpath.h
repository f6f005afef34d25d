#ifndef MIXPATH_H
#define MIXPATH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes shared by every function.
typedef enum MxStatus {
  MX_STATUS_OK = 0,
  MX_STATUS_NULL_POINTER = 1,
  MX_STATUS_INVALID_ARGUMENT = 2,
  MX_STATUS_IO = 3,
  MX_STATUS_FORMAT = 4,
  MX_STATUS_NUMERIC = 5,
  MX_STATUS_FINGERPRINT_MISMATCH = 6,
  MX_STATUS_ORACLE_TOO_SMALL = 7,
  MX_STATUS_INFEASIBLE = 8,
  MX_STATUS_PANIC = 9,
} MxStatus;

// Which split of an [`MxSplits`] to use.
typedef enum MxSplit {
  MX_SPLIT_TRAIN = 0,
  MX_SPLIT_VAL = 1,
  MX_SPLIT_TEST = 2,
} MxSplit;

// A ground-truth accuracy table.
typedef struct MxBench MxBench;

// A validated run configuration.
typedef struct MxConfig MxConfig;

// Train, validation and test datasets.
typedef struct MxSplits MxSplits;

// A trained (or loaded) supernet.
typedef struct MxSupernet MxSupernet;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the most recent failure on this thread, or NULL. The pointer
// stays valid until the next failing call on the same thread.
const char *mx_last_error(void);

// Releases a string returned by this library.
//
// # Safety
// `s` must come from this library and not have been freed.
void mx_string_free(char *s);

// The built-in micro experiment configuration.
//
// # Safety
// `out` must be a valid pointer.
enum MxStatus mx_config_micro(struct MxConfig **out);

// Parses and validates a JSON configuration.
//
// # Safety
// `json` must be a NUL-terminated string; `out` a valid pointer.
enum MxStatus mx_config_from_json(const char *json, struct MxConfig **out);

// Serializes a configuration; free the result with `mx_string_free`.
//
// # Safety
// `cfg` must be a live handle; `out` a valid pointer.
enum MxStatus mx_config_to_json(const struct MxConfig *cfg, char **out);

// The 16-hex-digit content hash naming the run directory.
//
// # Safety
// `cfg` must be a live handle; `out` a valid pointer.
enum MxStatus mx_config_hash(const struct MxConfig *cfg, char **out);

// # Safety
// `cfg` must be NULL or a handle not yet freed.
void mx_config_free(struct MxConfig *cfg);

// Multiply-adds and parameter count of `mask` in the configured space.
//
// # Safety
// `mask` must point to `len` integers; output pointers must be valid.
enum MxStatus mx_arch_cost(const struct MxConfig *cfg,
                           const uint32_t *mask,
                           size_t len,
                           uint64_t *flops,
                           uint64_t *params);

// Kendall tau-b between two score lists of length `n`.
//
// # Safety
// `a` and `b` must each point to `n` doubles; `out` must be valid.
enum MxStatus mx_kendall_tau(const double *a, const double *b, size_t n, double *out);

// Generates the synthetic splits the configuration describes.
//
// # Safety
// `cfg` must be a live handle; `out` a valid pointer.
enum MxStatus mx_data_generate(const struct MxConfig *cfg, struct MxSplits **out);

// Number of samples in one split.
//
// # Safety
// `data` must be a live handle; `out` a valid pointer.
enum MxStatus mx_data_len(const struct MxSplits *data, enum MxSplit split, size_t *out);

// # Safety
// `data` must be NULL or a handle not yet freed.
void mx_data_free(struct MxSplits *data);

// Trains a supernet on the training split with the configured settings.
//
// # Safety
// Handles must be live; `out` a valid pointer.
enum MxStatus mx_supernet_train(const struct MxConfig *cfg,
                                const struct MxSplits *data,
                                struct MxSupernet **out);

// Writes a checkpoint stamped with the configuration hash.
//
// # Safety
// Handles must be live; `path` a NUL-terminated string.
enum MxStatus mx_supernet_save(const struct MxSupernet *net,
                               const struct MxConfig *cfg,
                               const char *path);

// Loads a checkpoint, refusing one written under a different configuration.
//
// # Safety
// `cfg` must be live; `path` NUL-terminated; `out` valid.
enum MxStatus mx_supernet_load(const struct MxConfig *cfg,
                               const char *path,
                               struct MxSupernet **out);

// One-shot accuracy of `mask` on a split. With `calibration_batches > 0`
// the batch-norm statistics are first recomputed from that many leading
// training batches of `calibration_batch_size`.
//
// # Safety
// Handles must be live; `mask` must point to `len` integers; `out` valid.
enum MxStatus mx_supernet_accuracy(const struct MxSupernet *net,
                                   const struct MxSplits *data,
                                   enum MxSplit split,
                                   const uint32_t *mask,
                                   size_t len,
                                   size_t calibration_batches,
                                   size_t calibration_batch_size,
                                   double *out);

// # Safety
// `net` must be NULL or a handle not yet freed.
void mx_supernet_free(struct MxSupernet *net);

// Reads a JSON-lines ground-truth table.
//
// # Safety
// `path` must be NUL-terminated; `out` valid.
enum MxStatus mx_bench_read(const char *path, struct MxBench **out);

// Number of rows in the table.
//
// # Safety
// `bench` must be live; `out` valid.
enum MxStatus mx_bench_len(const struct MxBench *bench, size_t *out);

// Row `index`: the mask is copied into `mask_out` (capacity `mask_cap`,
// actual length in `mask_len`) together with accuracy and flops.
//
// # Safety
// `bench` must be live; `mask_out` must hold `mask_cap` integers; the
// other outputs must be valid.
enum MxStatus mx_bench_row(const struct MxBench *bench,
                           size_t index,
                           uint32_t *mask_out,
                           size_t mask_cap,
                           size_t *mask_len,
                           double *acc,
                           uint64_t *flops);

// Runs the evolutionary search against the table and returns the result
// (front, picks, evaluation count) as a JSON string; free it with
// `mx_string_free`.
//
// # Safety
// Handles must be live; `out` valid.
enum MxStatus mx_search_bench(const struct MxConfig *cfg, const struct MxBench *bench, char **out);

// # Safety
// `bench` must be NULL or a handle not yet freed.
void mx_bench_free(struct MxBench *bench);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MIXPATH_H */
