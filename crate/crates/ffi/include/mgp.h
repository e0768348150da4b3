/* C interface to the mgp quantum-graph library. */

#ifndef MGP_H
#define MGP_H

/* Generated by cbindgen from crates/ffi/src; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum MgpStatus {
  MGP_STATUS_OK = 0,
  MGP_STATUS_NULL_POINTER = 1,
  MGP_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Malformed scenario text.
   */
  MGP_STATUS_PARSE = 3,
  /**
   * The graph or its vertex conditions are invalid.
   */
  MGP_STATUS_GRAPH = 4,
  /**
   * A numerical failure: singular system, stalled vertex, node encounter.
   */
  MGP_STATUS_NUMERIC = 5,
  /**
   * A time or index outside the valid range.
   */
  MGP_STATUS_OUT_OF_RANGE = 6,
  MGP_STATUS_BUFFER_TOO_SMALL = 7,
  MGP_STATUS_IO = 8,
  /**
   * A Rust panic was caught at the boundary.
   */
  MGP_STATUS_PANIC = 9,
} MgpStatus;

/**
 * Turn rule for [`mgp_ensemble_sample`].
 */
typedef enum MgpTurnRule {
  MGP_TURN_RULE_MINIMAL = 0,
  MGP_TURN_RULE_ARGMAX = 1,
  MGP_TURN_RULE_ALMOST_MARKOV = 2,
} MgpTurnRule;

typedef struct MgpEnsemble MgpEnsemble;

typedef struct MgpScenario MgpScenario;

typedef struct MgpSimulation MgpSimulation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *mgp_version(void);

/**
 * Short name of a status code as a static NUL-terminated string.
 */
const char *mgp_status_name(enum MgpStatus status);

/**
 * Copies the calling thread's last error message, NUL-terminated and
 * truncated to `cap` bytes, into `buf`. Returns the full message length
 * excluding the terminator; pass `cap = 0` to query it.
 *
 * # Safety
 * `buf` must point to `cap` writable bytes or be null with `cap = 0`.
 */
size_t mgp_last_error_message(char *buf, size_t cap);

/**
 * Parses a scenario from JSON text.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum MgpStatus mgp_scenario_from_json(const char *json, struct MgpScenario **out);

/**
 * One of the scenarios shipped with the library, by name.
 *
 * # Safety
 * `name` must be a NUL-terminated string; `out` must be writable.
 */
enum MgpStatus mgp_scenario_bundled(const char *name, struct MgpScenario **out);

/**
 * Overrides grid spacing and time step.
 *
 * # Safety
 * `scenario` must come from this library and not be freed.
 */
enum MgpStatus mgp_scenario_set_numerics(struct MgpScenario *scenario, double h, double dt);

/**
 * # Safety
 * `scenario` must come from this library or be null; it is invalid afterwards.
 */
void mgp_scenario_free(struct MgpScenario *scenario);

/**
 * Builds the graph, grid and Hamiltonian and propagates to the
 * scenario's final time.
 *
 * # Safety
 * `scenario` must be a live handle; `out` must be writable.
 */
enum MgpStatus mgp_simulation_run(const struct MgpScenario *scenario, struct MgpSimulation **out);

/**
 * # Safety
 * `sim` must come from this library or be null; it is invalid afterwards.
 */
void mgp_simulation_free(struct MgpSimulation *sim);

/**
 * # Safety
 * `sim` must be a live handle or null (returns 0).
 */
size_t mgp_simulation_edge_count(const struct MgpSimulation *sim);

/**
 * # Safety
 * `sim` must be a live handle or null (returns 0).
 */
size_t mgp_simulation_vertex_count(const struct MgpSimulation *sim);

/**
 * Number of stored states.
 *
 * # Safety
 * `sim` must be a live handle or null (returns 0).
 */
size_t mgp_simulation_snapshot_count(const struct MgpSimulation *sim);

/**
 * Time of stored state `k`.
 *
 * # Safety
 * `sim` must be a live handle; `t` must be writable.
 */
enum MgpStatus mgp_simulation_snapshot_time(const struct MgpSimulation *sim, size_t k, double *t);

/**
 * `Σ w_i |ψ_i|²` of stored state `k`.
 *
 * # Safety
 * `sim` must be a live handle; `norm` must be writable.
 */
enum MgpStatus mgp_simulation_norm(const struct MgpSimulation *sim, size_t k, double *norm);

/**
 * Largest deviation of the weighted Hamiltonian from Hermitian symmetry.
 *
 * # Safety
 * `sim` must be a live handle; `residual` must be writable.
 */
enum MgpStatus mgp_simulation_symmetry_residual(const struct MgpSimulation *sim, double *residual);

/**
 * `|ψ|²` at the grid points of `edge` (from its start) in stored state `k`.
 *
 * # Safety
 * `sim` must be a live handle; `buf` must hold `cap` doubles; `written`
 * must be writable.
 */
enum MgpStatus mgp_simulation_density(const struct MgpSimulation *sim,
                                      size_t k,
                                      size_t edge,
                                      double *buf,
                                      size_t cap,
                                      size_t *written);

/**
 * Signed outward currents at `vertex` and time `t`, in incidence order;
 * the incident edge indices go to `edges` when it is not null.
 *
 * # Safety
 * `sim` must be a live handle; `flux` (and `edges` if non-null) must hold
 * `cap` values; `written` must be writable.
 */
enum MgpStatus mgp_simulation_vertex_flux(const struct MgpSimulation *sim,
                                          size_t vertex,
                                          double t,
                                          double *flux,
                                          size_t *edges,
                                          size_t cap,
                                          size_t *written);

/**
 * `P(e|q) = s_e⁺ / Σ s⁺` at `vertex` and time `t`, in incidence order.
 *
 * # Safety
 * As for [`mgp_simulation_vertex_flux`].
 */
enum MgpStatus mgp_simulation_edge_selection(const struct MgpSimulation *sim,
                                             size_t vertex,
                                             double t,
                                             double *probabilities,
                                             size_t cap,
                                             size_t *written);

/**
 * Samples `paths` trajectories from `|ψ_0|²` and records them at the
 * `n_times` output times.
 *
 * # Safety
 * `sim` must be a live handle; `times` must hold `n_times` doubles; `out`
 * must be writable.
 */
enum MgpStatus mgp_ensemble_sample(const struct MgpSimulation *sim,
                                   size_t paths,
                                   uint64_t seed,
                                   enum MgpTurnRule rule,
                                   const double *times,
                                   size_t n_times,
                                   struct MgpEnsemble **out);

/**
 * # Safety
 * `ens` must come from this library or be null; it is invalid afterwards.
 */
void mgp_ensemble_free(struct MgpEnsemble *ens);

/**
 * Total-variation distances at output time `k` (sorted order) over edge
 * masses and over position bins.
 *
 * # Safety
 * `ens` must be a live handle; both outputs must be writable.
 */
enum MgpStatus mgp_ensemble_tv(const struct MgpEnsemble *ens,
                               size_t k,
                               double *tv_edges,
                               double *tv_bins);

/**
 * Empirical and exact mass on `edge` at output time `k`.
 *
 * # Safety
 * `ens` must be a live handle; both outputs must be writable.
 */
enum MgpStatus mgp_ensemble_edge_mass(const struct MgpEnsemble *ens,
                                      size_t k,
                                      size_t edge,
                                      double *empirical,
                                      double *exact);

/**
 * From signed outward currents at one vertex, builds a randomized
 * feasible kernel and writes its Markovization and the edge selection.
 *
 * # Safety
 * `flux`, `markovized` and `selection` must each hold `n` doubles.
 */
enum MgpStatus mgp_markovize(const double *flux,
                             size_t n,
                             uint64_t seed,
                             double *markovized,
                             double *selection);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MGP_H */
