#ifndef BEARINGFORM_H
#define BEARINGFORM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum BfStatus {
  BF_STATUS_OK = 0,
  BF_STATUS_NULL_POINTER = 1,
  BF_STATUS_INVALID_ARGUMENT = 2,
  BF_STATUS_VALIDATION = 3,
  BF_STATUS_NUMERIC = 4,
  BF_STATUS_IO = 5,
  BF_STATUS_PARSE = 6,
  BF_STATUS_BUFFER_TOO_SMALL = 7,
  BF_STATUS_PANIC = 8,
} BfStatus;

typedef enum BfMode {
  BF_MODE_GLOBAL = 0,
  BF_MODE_LOCAL = 1,
} BfMode;

/**
 * Opaque parsed formation file.
 */
typedef struct BfFormation BfFormation;

/**
 * Opaque framework: graph plus positions.
 */
typedef struct BfFramework BfFramework;

/**
 * Opaque simulation result.
 */
typedef struct BfTrace BfTrace;

typedef struct BfRigidity {
  uintptr_t rank;
  uintptr_t nullity;
  uintptr_t rank_complete;
  uintptr_t required_rank;
  bool infinitesimally_rigid;
  bool globally_rigid;
} BfRigidity;

typedef struct BfDistanceRigidity {
  uintptr_t rank;
  uintptr_t required_rank;
  bool infinitesimally_rigid;
} BfDistanceRigidity;

/**
 * `gamma < 0` disables the proximity stop.
 */
typedef struct BfSimConfig {
  double dt;
  double t_end;
  enum BfMode mode;
  uint64_t seed;
  double gamma;
  uintptr_t record_every;
} BfSimConfig;

/**
 * Metrics of one sample; quantities that do not apply to the run's mode
 * are NaN.
 */
typedef struct BfMetrics {
  double time;
  double bearing_error;
  double delta_norm;
  double lyapunov;
  double centroid_drift;
  double scale_drift;
  double min_pair_distance;
  double sync_error;
  double h_norm;
  double theta;
} BfMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *bf_last_error(void);

/**
 * Library version as a static nul-terminated string.
 */
const char *bf_version(void);

/**
 * Builds a framework from `n` points in `R^dim` (stacked, `dim * n`
 * values) and `m` edges given as 1-based label pairs (`2 * m` values).
 *
 * # Safety
 * `positions` and `edges` must point to at least `dim * n` and `2 * m`
 * readable values; `out` must be writable.
 */
enum BfStatus bf_framework_new(uintptr_t dim,
                               uintptr_t n,
                               const double *positions,
                               uintptr_t m,
                               const uintptr_t *edges,
                               struct BfFramework **out);

/**
 * # Safety
 * `fw` must be null or a handle from [`bf_framework_new`] not yet freed.
 */
void bf_framework_free(struct BfFramework *fw);

/**
 * # Safety
 * `fw` must be a live framework handle and `out` writable.
 */
enum BfStatus bf_framework_rigidity(const struct BfFramework *fw,
                                    double tol,
                                    struct BfRigidity *out);

/**
 * # Safety
 * `fw` must be a live framework handle and `out` writable.
 */
enum BfStatus bf_framework_distance_rigidity(const struct BfFramework *fw,
                                             double tol,
                                             struct BfDistanceRigidity *out);

/**
 * Writes the bearing rigidity matrix row-major into `out`. `rows` and
 * `cols` receive its shape even when `capacity` is too small.
 *
 * # Safety
 * `fw` must be a live handle; `out` must hold `capacity` values; `rows`
 * and `cols` must be writable or null.
 */
enum BfStatus bf_framework_rigidity_matrix(const struct BfFramework *fw,
                                           double *out,
                                           uintptr_t capacity,
                                           uintptr_t *rows,
                                           uintptr_t *cols);

/**
 * Loads a JSON formation file.
 *
 * # Safety
 * `path` must be a nul-terminated string and `out` writable.
 */
enum BfStatus bf_formation_load(const char *path, struct BfFormation **out);

/**
 * Parses a formation from JSON text.
 *
 * # Safety
 * `json` must be a nul-terminated string and `out` writable.
 */
enum BfStatus bf_formation_parse(const char *json, struct BfFormation **out);

/**
 * # Safety
 * `f` must be null or a live formation handle.
 */
void bf_formation_free(struct BfFormation *f);

/**
 * Number of agents, or 0 for a null handle.
 *
 * # Safety
 * `f` must be null or a live formation handle.
 */
uintptr_t bf_formation_agent_count(const struct BfFormation *f);

/**
 * Dimension, or 0 for a null handle.
 *
 * # Safety
 * `f` must be null or a live formation handle.
 */
uintptr_t bf_formation_dimension(const struct BfFormation *f);

/**
 * Target formation (`dim * n` values) for the file's bearings. Uses the
 * file's positions for centroid and scale, or a feasible witness when the
 * file has none.
 *
 * # Safety
 * `f` must be a live handle; `out` must hold `capacity` values; `needed`
 * must be writable or null.
 */
enum BfStatus bf_formation_target(const struct BfFormation *f,
                                  double tol,
                                  double *out,
                                  uintptr_t capacity,
                                  uintptr_t *needed);

struct BfSimConfig bf_sim_config_default(void);

/**
 * Simulates the formation from its file state (or a seeded random start
 * for whatever the file omits).
 *
 * # Safety
 * `f` must be a live handle, `cfg` readable and `out` writable.
 */
enum BfStatus bf_formation_simulate(const struct BfFormation *f,
                                    const struct BfSimConfig *cfg,
                                    struct BfTrace **out);

/**
 * # Safety
 * `t` must be null or a live trace handle.
 */
void bf_trace_free(struct BfTrace *t);

/**
 * Number of samples, or 0 for a null handle.
 *
 * # Safety
 * `t` must be null or a live trace handle.
 */
uintptr_t bf_trace_len(const struct BfTrace *t);

/**
 * True when the run stopped early on a collapsed edge or a proximity event.
 *
 * # Safety
 * `t` must be null or a live trace handle.
 */
bool bf_trace_terminated_early(const struct BfTrace *t);

/**
 * Stacked positions of sample `index`.
 *
 * # Safety
 * `t` must be a live handle; `out` must hold `capacity` values; `needed`
 * must be writable or null.
 */
enum BfStatus bf_trace_positions(const struct BfTrace *t,
                                 uintptr_t index,
                                 double *out,
                                 uintptr_t capacity,
                                 uintptr_t *needed);

/**
 * Metrics of sample `index`.
 *
 * # Safety
 * `t` must be a live handle and `out` writable.
 */
enum BfStatus bf_trace_metrics(const struct BfTrace *t, uintptr_t index, struct BfMetrics *out);

/**
 * Writes the trajectory CSV and its `.metrics.json` sibling.
 *
 * # Safety
 * `t` must be a live handle and `path` a nul-terminated string.
 */
enum BfStatus bf_trace_write_csv(const struct BfTrace *t, const char *path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BEARINGFORM_H */
