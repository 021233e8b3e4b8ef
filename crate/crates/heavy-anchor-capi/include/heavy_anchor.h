/* C interface to the anchored equilibrium-seeking library. */

#ifndef HEAVY_ANCHOR_H
#define HEAVY_ANCHOR_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call in this interface.
 */
typedef enum HaStatus {
  /**
   * The call succeeded.
   */
  HA_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  HA_STATUS_NULL_ARGUMENT = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  HA_STATUS_INVALID_UTF8 = 2,
  /**
   * The scenario text failed to parse or validate.
   */
  HA_STATUS_INVALID_CONFIG = 3,
  /**
   * Synthesis is provably infeasible for the requested setup.
   */
  HA_STATUS_INFEASIBLE = 4,
  /**
   * Any other failure; see ha_last_error_message.
   */
  HA_STATUS_FAILED = 5,
} HaStatus;

/**
 * A feasible certificate: gain windows, chosen gains, and the consensus
 * floor when one applies.
 */
typedef struct HaCertificate HaCertificate;

/**
 * A finished run: trajectory, diagnostics, summary, and the property
 * verdicts for the scenario's expectations.
 */
typedef struct HaRun HaRun;

/**
 * A parsed and validated scenario: game, graph, operator constants, and the
 * governing certificate tag.
 */
typedef struct HaScenario HaScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Version of the underlying library, as a static NUL-terminated string.
 */
const char *ha_version(void);

/**
 * Message recorded by the most recent failing call on this thread, or null
 * when no call has failed yet. The pointer stays valid until the next
 * failing call on the same thread.
 */
const char *ha_last_error_message(void);

/**
 * A commented scenario template with every default spelled out. Free with
 * ha_string_free.
 */
char *ha_default_scenario_toml(void);

/**
 * Release a string returned by this interface. Null is ignored.
 *
 * # Safety
 * `s` must have been returned by a function of this interface and not freed
 * before.
 */
void ha_string_free(char *s);

/**
 * Parse scenario TOML and build the full context behind an opaque handle.
 * Free with ha_scenario_free.
 *
 * # Safety
 * `toml_text` must be a NUL-terminated string and `out_scenario` a valid
 * pointer; on success the caller owns the returned handle.
 */
enum HaStatus ha_scenario_from_toml(const char *toml_text, struct HaScenario **out_scenario);

/**
 * Release a scenario handle. Null is ignored.
 *
 * # Safety
 * `scenario` must come from ha_scenario_from_toml and not be freed twice.
 */
void ha_scenario_free(struct HaScenario *scenario);

/**
 * Operator moduli and the resolvent feasibility window, as JSON.
 *
 * # Safety
 * `scenario` must be a live handle and `out_json` a valid pointer.
 */
enum HaStatus ha_scenario_analyze(const struct HaScenario *scenario, char **out_json);

/**
 * Synthesize certified gains for the scenario's governing conditions.
 * Returns Infeasible, with the reason in the last-error message, when no
 * gains exist. Free the certificate with ha_certificate_free.
 *
 * # Safety
 * `scenario` must be a live handle and `out_certificate` a valid pointer.
 */
enum HaStatus ha_scenario_synthesize(const struct HaScenario *scenario,
                                     struct HaCertificate **out_certificate);

/**
 * The full certificate as JSON: gain windows, chosen gains, tuning, and the
 * consensus floor with its auxiliary data.
 *
 * # Safety
 * `certificate` must be a live handle and `out_json` a valid pointer.
 */
enum HaStatus ha_certificate_json(const struct HaCertificate *certificate, char **out_json);

/**
 * The certified gains. `out_c_min` receives NaN when the scenario runs under
 * full information and no consensus gain applies.
 *
 * # Safety
 * `certificate` must be a live handle; output pointers must be valid.
 */
enum HaStatus ha_certificate_gains(const struct HaCertificate *certificate,
                                   double *out_alpha,
                                   double *out_beta,
                                   double *out_c_min);

/**
 * Release a certificate handle. Null is ignored.
 *
 * # Safety
 * `certificate` must come from ha_scenario_synthesize and not be freed twice.
 */
void ha_certificate_free(struct HaCertificate *certificate);

/**
 * Synthesize (unless `force` takes the overrides as given), integrate, and
 * check the scenario's expected properties. Free with ha_run_free; nothing
 * is written to the filesystem.
 *
 * # Safety
 * `scenario` must be a live handle and `out_run` a valid pointer.
 */
enum HaStatus ha_scenario_run(const struct HaScenario *scenario,
                              bool force,
                              struct HaRun **out_run);

/**
 * The run summary as JSON: parameters, final residuals, convergence verdict,
 * and the fitted decay rate when one is defined.
 *
 * # Safety
 * `run` must be a live handle and `out_json` a valid pointer.
 */
enum HaStatus ha_run_summary_json(const struct HaRun *run, char **out_json);

/**
 * The recorded trajectory as CSV text with one row per sample.
 *
 * # Safety
 * `run` must be a live handle and `out_csv` a valid pointer.
 */
enum HaStatus ha_run_trajectory_csv(const struct HaRun *run, char **out_csv);

/**
 * The per-check verification report for the run, as JSON.
 *
 * # Safety
 * `run` must be a live handle and `out_json` a valid pointer.
 */
enum HaStatus ha_run_verify_json(const struct HaRun *run, char **out_json);

/**
 * Whether the run reached the built-in residual and consensus tolerances and
 * every verification check passed.
 *
 * # Safety
 * `run` must be a live handle; output pointers must be valid.
 */
enum HaStatus ha_run_converged(const struct HaRun *run, bool *out_converged, bool *out_verified);

/**
 * Release a run handle. Null is ignored.
 *
 * # Safety
 * `run` must come from ha_scenario_run and not be freed twice.
 */
void ha_run_free(struct HaRun *run);

/**
 * Recompute the published parameter table, diff it cell by cell against the
 * reference, and return `{computed, reference, comparison}` as JSON.
 * `out_all_within` reports whether every cell stayed inside tolerance.
 *
 * # Safety
 * Output pointers must be valid.
 */
enum HaStatus ha_reproduce_table_json(char **out_json, bool *out_all_within);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HEAVY_ANCHOR_H */
