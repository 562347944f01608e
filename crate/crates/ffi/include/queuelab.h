#ifndef QUEUELAB_H
#define QUEUELAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum QlStatus {
  QL_STATUS_OK = 0,
  QL_STATUS_NULL_POINTER = 1,
  QL_STATUS_INVALID_ARGUMENT = 2,
  QL_STATUS_UTF8 = 3,
  QL_STATUS_PARSE = 4,
  QL_STATUS_CONFIG = 5,
  QL_STATUS_IO = 6,
  QL_STATUS_REPLICATION = 7,
  QL_STATUS_MANIFEST = 8,
  QL_STATUS_DEGENERATE = 9,
  QL_STATUS_PANIC = 10,
} QlStatus;

typedef enum QlMomentVerdict {
  QL_MOMENT_VERDICT_FINITE = 0,
  QL_MOMENT_VERDICT_INFINITE = 1,
  QL_MOMENT_VERDICT_INTEGER_RHO_OPEN = 2,
  QL_MOMENT_VERDICT_UNKNOWN = 3,
} QlMomentVerdict;

/**
 * Distribution handle.
 */
typedef struct QlDistribution QlDistribution;

/**
 * Random stream handle.
 */
typedef struct QlRng QlRng;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call into the library from the same thread.
 */
const char *ql_last_error_message(void);

/**
 * Library version as a static string.
 */
const char *ql_version(void);

/**
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void ql_string_free(char *s);

/**
 * New stream `stream_id` under `seed`; never null.
 */
struct QlRng *ql_rng_new(uint64_t seed, uint64_t stream_id);

/**
 * # Safety
 * `rng` must come from [`ql_rng_new`] and not have been freed.
 */
void ql_rng_free(struct QlRng *rng);

/**
 * Uniform draw on `[0, 1)`.
 *
 * # Safety
 * `rng` must be a live handle and `out` writable.
 */
enum QlStatus ql_rng_uniform(struct QlRng *rng, double *out);

/**
 * Parses `exp(1.0)`, `pareto(2.5,1)` and the other canonical forms.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` writable.
 */
enum QlStatus ql_distribution_parse(const char *text, struct QlDistribution **out);

/**
 * # Safety
 * `d` must come from [`ql_distribution_parse`] and not have been freed.
 */
void ql_distribution_free(struct QlDistribution *d);

/**
 * # Safety
 * `d` must be a live handle and `out` writable.
 */
enum QlStatus ql_distribution_mean(const struct QlDistribution *d, double *out);

/**
 * `P(X > x)`.
 *
 * # Safety
 * `d` must be a live handle and `out` writable.
 */
enum QlStatus ql_distribution_tail(const struct QlDistribution *d, double x, double *out);

/**
 * # Safety
 * `d` and `rng` must be live handles and `out` writable.
 */
enum QlStatus ql_distribution_sample(const struct QlDistribution *d,
                                     struct QlRng *rng,
                                     double *out);

/**
 * `max(w + sigma - t, 0)`.
 */
double ql_lindley_step(double w, double sigma, double t);

/**
 * One multi-server workload step on the sorted vector `w[0..m]`, in place.
 *
 * # Safety
 * `w` must point to `m` writable doubles.
 */
enum QlStatus ql_kw_step(double *w, size_t m, double sigma, double t);

/**
 * Whether `E D^gamma` is finite for the `m`-server queue with load `rho`.
 *
 * # Safety
 * `service` must be a live handle and `out` writable.
 */
enum QlStatus ql_moment_check(const struct QlDistribution *service,
                              double rho,
                              size_t m,
                              double gamma,
                              enum QlMomentVerdict *out);

/**
 * Validates config text; relative file references resolve against `base_dir`
 * (null means the current directory). All problems end up in the error message.
 *
 * # Safety
 * `text` must be NUL-terminated; `base_dir` NUL-terminated or null.
 */
enum QlStatus ql_config_validate(const char *text, const char *base_dir);

/**
 * Runs a config and writes its CSV and manifest into `out_dir`. On success
 * `manifest_json` (if not null) receives the manifest, to be released with
 * [`ql_string_free`].
 *
 * # Safety
 * `text` and `out_dir` must be NUL-terminated; `base_dir` NUL-terminated or
 * null; `manifest_json` writable or null.
 */
enum QlStatus ql_run_config(const char *text,
                            const char *base_dir,
                            const char *out_dir,
                            char **manifest_json);

/**
 * Recomputes the output digests listed in a manifest file.
 *
 * # Safety
 * `manifest_path` must be NUL-terminated.
 */
enum QlStatus ql_verify_manifest(const char *manifest_path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QUEUELAB_H */
