#ifndef OSM_ALC_H
#define OSM_ALC_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes; values 1 to 5 match the command-line exit codes.
 */
typedef enum AlcStatus {
  ALC_STATUS_OK = 0,
  ALC_STATUS_FAILURE = 1,
  ALC_STATUS_INVALID_INPUT = 2,
  ALC_STATUS_DISCONNECTED = 3,
  ALC_STATUS_INVALID_CONFIG = 4,
  ALC_STATUS_INVALID_ROUTE = 5,
  ALC_STATUS_NULL_ARGUMENT = 6,
  ALC_STATUS_PANIC = 7,
} AlcStatus;

/**
 * Opaque road graph.
 */
typedef struct AlcGraph AlcGraph;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Parses graph JSON. `start` may be null to keep the document's start node.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `start` null or valid; `out` writable.
 */
enum AlcStatus alc_graph_from_json(const char *json, const int64_t *start, struct AlcGraph **out);

/**
 * Parses OSM XML. `config` (nullable, `key = value` lines) selects the
 * highway filter; a null `start` picks the first node of the first road way.
 *
 * # Safety
 * String arguments must be NUL-terminated or null where allowed; `out` writable.
 */
enum AlcStatus alc_graph_from_osm(const char *xml,
                                  const int64_t *start,
                                  const char *config,
                                  struct AlcGraph **out);

/**
 * # Safety
 * `g` must come from this library and not be freed twice. Null is ignored.
 */
void alc_graph_free(struct AlcGraph *g);

/**
 * # Safety
 * `g` must be null or a live handle. Null yields 0.
 */
size_t alc_graph_node_count(const struct AlcGraph *g);

/**
 * # Safety
 * `g` must be null or a live handle. Null yields 0.
 */
size_t alc_graph_edge_count(const struct AlcGraph *g);

/**
 * # Safety
 * `g` must be a live handle and `out` writable.
 */
enum AlcStatus alc_graph_to_json(const struct AlcGraph *g, char **out);

/**
 * Plans a coverage tour: `{nodes, edges, distance, score, report}`.
 *
 * # Safety
 * `g` must be a live handle, `config` null or NUL-terminated, `out` writable.
 */
enum AlcStatus alc_plan(const struct AlcGraph *g, const char *config, char **out);

/**
 * Replans after the traveled route (node array or `{nodes, edges}` JSON).
 *
 * # Safety
 * `g` must be a live handle, strings NUL-terminated (`config` may be null), `out` writable.
 */
enum AlcStatus alc_replan(const struct AlcGraph *g,
                          const char *traveled,
                          const char *config,
                          char **out);

/**
 * Simulates the route with and without active loop closure and returns the
 * paired summary. A null `route` simulates the planned tour.
 *
 * # Safety
 * `g` must be a live handle, `route` and `config` null or NUL-terminated, `out` writable.
 */
enum AlcStatus alc_simulate(const struct AlcGraph *g,
                            const char *route,
                            const char *config,
                            char **out);

/**
 * Information gain of a driven route: D-optimality of its edge graph and
 * the distance-normalized score. Either output pointer may be null.
 *
 * # Safety
 * `g` must be a live handle, `route` NUL-terminated, `config` null or NUL-terminated.
 */
enum AlcStatus alc_route_d_opt(const struct AlcGraph *g,
                               const char *route,
                               const char *config,
                               double *d_opt,
                               double *score);

/**
 * # Safety
 * `s` must be null or a string returned by this library, freed once.
 */
void alc_string_free(char *s);

/**
 * Message for the last failure on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *alc_last_error(void);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* OSM_ALC_H */
