#ifndef VI_SPECTRAL_H
#define VI_SPECTRAL_H

/* Generated by cbindgen from vi-spectral-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible call.
typedef enum VisStatus {
  // Success.
  VisStatus_Ok = 0,
  // A required pointer argument was null.
  VisStatus_NullPointer = 1,
  // An argument failed validation.
  VisStatus_InvalidArgument = 2,
  // A string argument was not valid UTF-8.
  VisStatus_InvalidUtf8 = 3,
  // File read or write failed.
  VisStatus_Io = 4,
  // JSON parsing or model validation failed.
  VisStatus_Parse = 5,
  // Rejection sampling ran out of attempts.
  VisStatus_GenerationExhausted = 6,
  // A traced run violated its own sandwich bounds.
  VisStatus_SandwichViolated = 7,
  // A numerical routine failed (singular system, no eigen convergence,
  // ill-posed weights).
  VisStatus_Numerical = 8,
  // An index was out of range.
  VisStatus_OutOfRange = 9,
  // An internal panic was caught at the boundary.
  VisStatus_Panic = 10,
} VisStatus;

// Terminal distribution for the backward probability recursion.
typedef enum VisTerminal {
  VisTerminal_Uniform = 0,
  VisTerminal_StationaryOfLastMix = 1,
} VisTerminal;

// Opaque model handle.
typedef struct VisMdp VisMdp;

// Opaque handle to a completed, fully diagnosed run.
typedef struct VisRun VisRun;

// Horizon-level summary of a run, flattened for C consumers. Optional
// quantities carry a paired `has_*` flag; when the flag is false the value
// is zero and meaningless.
typedef struct VisSummary {
  size_t n;
  size_t m;
  size_t horizon;
  double gamma;
  double gamma_alpha;
  bool assumption_unique_optimal;
  bool assumption_irreducible;
  bool assumption_aperiodic;
  double lambda;
  bool has_lambda;
  bool corollary_holds;
  bool has_corollary;
  size_t corollary_effective_horizon;
  double max_theorem_residual;
  bool has_max_theorem_residual;
  size_t steps_strongly_connected;
  size_t degenerate_rows;
  bool fault_injected;
} VisSummary;

// One row of the per-step table, flattened for C consumers.
typedef struct VisStepValues {
  size_t t;
  double e_inf_norm;
  double consensus;
  double delta_norm_sq_weighted;
  double gain;
  bool has_gain;
  double theorem_residual;
  bool has_theorem_residual;
  double lambda2_generalized;
  bool has_lambda2_generalized;
  double rayleigh_value;
  bool has_rayleigh_value;
  bool mix_strongly_connected;
  bool has_mix_flag;
  bool degenerate;
} VisStepValues;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static string; never freed by the caller.
const char *vis_version(void);

// Message for the most recent failure on this thread. The pointer stays
// valid until the next library call on the same thread; do not free it.
const char *vis_last_error(void);

// Releases a string allocated by this library.
//
// # Safety
// `s` must be null or a pointer previously returned through one of this
// library's string out-parameters, not yet freed.
void vis_string_free(char *s);

// Parses and validates a model from its JSON text.
//
// # Safety
// `json` must be a valid NUL-terminated string; `out` must be a valid
// pointer to receive the handle.
enum VisStatus vis_mdp_from_json(const char *json, struct VisMdp **out);

// Loads and validates a model from a JSON file.
//
// # Safety
// `path` must be a valid NUL-terminated string; `out` must be a valid
// pointer to receive the handle.
enum VisStatus vis_mdp_load_file(const char *path, struct VisMdp **out);

// Samples a model satisfying the structural assumption (unique optimum
// inducing an irreducible aperiodic chain), by seeded rejection.
//
// # Safety
// `out` must be a valid pointer to receive the handle.
enum VisStatus vis_mdp_generate(size_t n,
                                size_t m,
                                uint64_t seed,
                                double density,
                                double gamma,
                                double reward_lo,
                                double reward_hi,
                                uint32_t max_attempts,
                                struct VisMdp **out);

// Serializes a model to JSON. The string must be freed with
// [`vis_string_free`].
//
// # Safety
// `mdp` must be a live handle; `out` must be a valid pointer.
enum VisStatus vis_mdp_to_json(const struct VisMdp *mdp, char **out);

// State and action counts of a model.
//
// # Safety
// `mdp` must be a live handle; `out_n` and `out_m` must be valid pointers.
enum VisStatus vis_mdp_dims(const struct VisMdp *mdp, size_t *out_n, size_t *out_m);

// Discount factor of a model.
//
// # Safety
// `mdp` must be a live handle; `out` must be a valid pointer.
enum VisStatus vis_mdp_gamma(const struct VisMdp *mdp, double *out);

// Releases a model handle.
//
// # Safety
// `mdp` must be null or a live handle, not yet freed.
void vis_mdp_free(struct VisMdp *mdp);

// Runs the full pipeline on a model: traced damped iteration from a seeded
// initial error, probability-sequence diagnostics, and spectral bounds.
// `inject_fault` enables the documented negative-control hook (a 1e-3
// corruption of one mix entry) so callers can verify the checks trip.
//
// # Safety
// `mdp` must be a live handle; `out` must be a valid pointer to receive the
// run handle.
enum VisStatus vis_run_experiment(const struct VisMdp *mdp,
                                  double alpha,
                                  size_t horizon,
                                  uint64_t e0_seed,
                                  double e0_scale,
                                  enum VisTerminal terminal,
                                  bool inject_fault,
                                  struct VisRun **out);

// Number of steps in a run.
//
// # Safety
// `run` must be a live handle; `out` must be a valid pointer.
enum VisStatus vis_run_horizon(const struct VisRun *run, size_t *out);

// Horizon-level summary of a run.
//
// # Safety
// `run` must be a live handle; `out` must be a valid pointer.
enum VisStatus vis_run_summary(const struct VisRun *run, struct VisSummary *out);

// Per-step values for `t` in `0 ..= horizon`.
//
// # Safety
// `run` must be a live handle; `out` must be a valid pointer.
enum VisStatus vis_run_step(const struct VisRun *run, size_t t, struct VisStepValues *out);

// Writes `trace.csv` and `report.json` (and `matrices.json` when the run was
// configured for it) into a directory.
//
// # Safety
// `run` must be a live handle; `dir` must be a valid NUL-terminated string.
enum VisStatus vis_run_write_artifacts(const struct VisRun *run, const char *dir);

// Serializes the full report to JSON. The string must be freed with
// [`vis_string_free`].
//
// # Safety
// `run` must be a live handle; `out` must be a valid pointer.
enum VisStatus vis_run_report_json(const struct VisRun *run, char **out);

// Releases a run handle.
//
// # Safety
// `run` must be null or a live handle, not yet freed.
void vis_run_free(struct VisRun *run);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VI_SPECTRAL_H */
