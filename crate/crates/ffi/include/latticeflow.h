#ifndef LATTICEFLOW_H
#define LATTICEFLOW_H

/* Generated by cbindgen from latticeflow-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes for every API entry point.
typedef enum LfStatus {
  LF_STATUS_OK = 0,
  LF_STATUS_NULL_POINTER = 1,
  LF_STATUS_INVALID_UTF8 = 2,
  LF_STATUS_PARSE_ERROR = 3,
  LF_STATUS_VALIDATION_ERROR = 4,
  LF_STATUS_RUNTIME_ERROR = 5,
  LF_STATUS_TRANSFORM_ERROR = 6,
  LF_STATUS_INVALID_ARGUMENT = 7,
  // Verification completed and found a divergence witness.
  LF_STATUS_DIVERGED = 8,
} LfStatus;

typedef struct LfDeployment LfDeployment;

typedef struct LfRunResult LfRunResult;

typedef struct LfScenario LfScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent non-Ok status on this thread. Borrowed;
// valid until the next failing call on the same thread.
const char *lf_last_error(void);

// Frees a string returned by this library.
//
// # Safety
// `s` must be a pointer previously returned through a `char**` output of
// this library, not yet freed.
void lf_string_free(char *s);

// The fixed reference scenario.
enum LfStatus lf_scenario_apples(struct LfScenario **out);

// A deterministic generated scenario.
enum LfStatus lf_scenario_generate(uint64_t seed,
                                   uint32_t n_clients,
                                   uint32_t max_session_len,
                                   struct LfScenario **out);

// Parses a scenario TOML document.
//
// # Safety
// `text` must be a valid NUL-terminated string.
enum LfStatus lf_scenario_from_toml(const char *text, struct LfScenario **out);

// # Safety
// `s` must come from a scenario constructor of this library.
void lf_scenario_free(struct LfScenario *s);

// Builds a corpus variant deployment. `variant` is one of `orig`, `bp`,
// `ssiv`, `pushed`, `decoupled_server`, `decoupled_client`, `replicated`.
//
// # Safety
// `variant` must be a valid NUL-terminated string.
enum LfStatus lf_deployment_variant(const char *variant,
                                    uint32_t replicas,
                                    int64_t assign_seed,
                                    struct LfDeployment **out);

// Parses a deployment TOML document (inline graphs).
//
// # Safety
// `text` must be a valid NUL-terminated string.
enum LfStatus lf_deployment_from_toml(const char *text, struct LfDeployment **out);

// Renders a deployment back to TOML. Free with `lf_string_free`.
//
// # Safety
// `d` must be a live deployment handle.
enum LfStatus lf_deployment_to_toml(const struct LfDeployment *d, char **out);

// Applies a transform script (one `rule arg=value …` per line), yielding a
// new deployment handle.
//
// # Safety
// `d` must be a live deployment handle and `script` a valid
// NUL-terminated string.
enum LfStatus lf_deployment_transform(const struct LfDeployment *d,
                                      const char *script,
                                      struct LfDeployment **out);

// # Safety
// `d` must come from a deployment constructor of this library.
void lf_deployment_free(struct LfDeployment *d);

// Canonicalizes dataflow DSL text: parse, validate, re-emit. Free the
// result with `lf_string_free`.
//
// # Safety
// `dsl` must be a valid NUL-terminated string.
enum LfStatus lf_graph_canonicalize(const char *dsl, char **out);

// Runs a deployment against a scenario to quiescence.
//
// # Safety
// `d` and `s` must be live handles from this library.
enum LfStatus lf_run(const struct LfDeployment *d,
                     const struct LfScenario *s,
                     uint64_t net_seed,
                     uint64_t tick_limit,
                     struct LfRunResult **out);

// Number of sealed output lines of a run.
//
// # Safety
// `r` must be a live run-result handle.
size_t lf_run_result_line_count(const struct LfRunResult *r);

// One sealed output line. Borrowed; valid while the handle lives. Null
// when out of range.
//
// # Safety
// `r` must be a live run-result handle.
const char *lf_run_result_line(const struct LfRunResult *r, size_t idx);

// The full run trace. Borrowed; valid while the handle lives.
//
// # Safety
// `r` must be a live run-result handle.
const char *lf_run_result_trace(const struct LfRunResult *r);

// Ticks the run took to quiesce.
//
// # Safety
// `r` must be a live run-result handle.
uint64_t lf_run_result_ticks(const struct LfRunResult *r);

// # Safety
// `r` must come from `lf_run`.
void lf_run_result_free(struct LfRunResult *r);

// Runs comma-separated corpus variants across `n_seeds` adversarial seeds
// and compares sealed outputs against the sequential-fold oracle. Returns
// `Ok` when equivalent; `Diverged` (with a witness message in
// `lf_last_error`) when not.
//
// # Safety
// `variants` must be a valid NUL-terminated string and `s` a live
// scenario handle.
enum LfStatus lf_verify(const char *variants,
                        const struct LfScenario *s,
                        uint64_t base_seed,
                        uint32_t n_seeds,
                        uint32_t replicas,
                        size_t *out_runs);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LATTICEFLOW_H */
