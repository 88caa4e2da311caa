/* pathflux C ABI: path-specific causal influence on discrete SCMs. */

#ifndef PATHFLUX_H
#define PATHFLUX_H

/* Generated with cbindgen; edit src/lib.rs instead. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes mirroring the CLI exit codes.
typedef enum PathfluxStatus {
  // Success.
  PATHFLUX_STATUS_OK = 0,
  // Invalid input: model, dataset, configuration, or arguments.
  PATHFLUX_STATUS_VALIDATION = 2,
  // Numerical guard: overlap or truncation-floor violation.
  PATHFLUX_STATUS_NUMERIC_GUARD = 3,
  // A null pointer was passed where data was required.
  PATHFLUX_STATUS_NULL_ARGUMENT = 4,
  // Internal panic; the operation did not complete.
  PATHFLUX_STATUS_PANIC = 5,
} PathfluxStatus;

// Opaque model handle.
typedef struct PathfluxScm PathfluxScm;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message describing the most recent failure on this thread. The pointer
// stays valid until the next failing call on the same thread.
const char *pathflux_last_error(void);

// Library version as a static string; never freed.
const char *pathflux_version(void);

// Release a string returned by this library. A null pointer is a no-op.
//
// # Safety
// `s` must have been returned by a pathflux function and not freed before.
void pathflux_string_free(char *s);

// Parse and validate a model from its JSON document.
//
// # Safety
// `json` must be a NUL-terminated string; `out` must be a valid pointer.
enum PathfluxStatus pathflux_scm_from_json(const char *json, struct PathfluxScm **out);

// Fetch a built-in model (`"t0"` or `"t1"`).
//
// # Safety
// `name` must be a NUL-terminated string; `out` must be a valid pointer.
enum PathfluxStatus pathflux_scm_builtin(const char *name, struct PathfluxScm **out);

// Re-check every model invariant.
//
// # Safety
// `scm` must be a live handle from this library.
enum PathfluxStatus pathflux_scm_validate(const struct PathfluxScm *scm);

// Serialize the model back to its JSON document.
//
// # Safety
// `scm` must be a live handle; `out` must be valid. Free the result with
// [`pathflux_string_free`].
enum PathfluxStatus pathflux_scm_to_json(const struct PathfluxScm *scm, char **out);

// Destroy a model handle. A null pointer is a no-op.
//
// # Safety
// `scm` must have come from this library and not be freed twice.
void pathflux_scm_free(struct PathfluxScm *scm);

// Draw `n` i.i.d. rows and return them as CSV (`w,a,z,m,y` header).
// Byte-identical for equal `(n, seed)`.
//
// # Safety
// `scm` must be a live handle; `out` must be valid. Free the result with
// [`pathflux_string_free`].
enum PathfluxStatus pathflux_simulate_csv(const struct PathfluxScm *scm,
                                          uint64_t n,
                                          uint64_t seed,
                                          char **out);

// Exact decompositions of the model, as the `oracle` JSON document.
// Set `include_ate` nonzero to add the treatment-effect decomposition
// (binary exposure only).
//
// # Safety
// `scm` must be a live handle; `out` must be valid. Free the result with
// [`pathflux_string_free`].
enum PathfluxStatus pathflux_oracle_json(const struct PathfluxScm *scm,
                                         int32_t include_ate,
                                         char **out);

// Cross-fitted estimation from a CSV dataset, as the `estimate` JSON
// document. `config_json` takes the same keys as the CLI `--config` file
// and may be null for defaults.
//
// # Safety
// `csv` must be NUL-terminated; `config_json` may be null; `out` must be
// valid. Free the result with [`pathflux_string_free`].
enum PathfluxStatus pathflux_estimate_json(const char *csv,
                                           const char *config_json,
                                           int32_t include_ate,
                                           char **out);

// Run a verification experiment from its spec JSON and return the report
// JSON (the verdict is the `pass` field).
//
// # Safety
// `spec_json` must be NUL-terminated; `out` must be valid. Free the
// result with [`pathflux_string_free`].
enum PathfluxStatus pathflux_verify_json(const char *spec_json, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PATHFLUX_H */
