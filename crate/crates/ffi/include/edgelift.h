/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef EDGELIFT_H
#define EDGELIFT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of a fallible call. Values 2 and 3 match the command-line exit
 * codes for invalid input and undefined estimates.
 */
typedef enum ElStatus {
  EL_STATUS_OK = 0,
  /**
   * Null pointer, bad enum value or non-UTF-8 string.
   */
  EL_STATUS_INVALID_ARGUMENT = 1,
  /**
   * Malformed input data or configuration.
   */
  EL_STATUS_INVALID_INPUT = 2,
  /**
   * Too few members per group, an empty edge class or a degenerate null.
   */
  EL_STATUS_UNDEFINED = 3,
  /**
   * Internal failure; the library caught a panic.
   */
  EL_STATUS_INTERNAL = 4,
} ElStatus;

typedef enum ElPermutationMode {
  EL_PERMUTATION_MODE_FULL = 0,
  EL_PERMUTATION_MODE_SENDER = 1,
  EL_PERMUTATION_MODE_RECIPIENT = 2,
} ElPermutationMode;

typedef enum ElNormalization {
  EL_NORMALIZATION_REALIZED = 0,
  EL_NORMALIZATION_EXPECTED = 1,
} ElNormalization;

/**
 * Opaque edge list.
 */
typedef struct ElEdges ElEdges;

/**
 * Opaque analysis report.
 */
typedef struct ElReport ElReport;

typedef struct ElConfig {
  /**
   * Treatment probability of the design, in (0, 1).
   */
  double p;
  /**
   * Group sizes including silent members; zero in both infers them from
   * the edges.
   */
  uint64_t n_treated;
  uint64_t n_control;
  uint64_t seed;
  uint32_t iterations;
  double ci_level;
  /**
   * An `ElPermutationMode` value.
   */
  uint32_t mode;
  /**
   * An `ElNormalization` value.
   */
  uint32_t normalization;
  /**
   * Days covered by the data; zero when unknown.
   */
  uint32_t window_days;
} ElConfig;

typedef struct ElEdge {
  uint64_t src;
  uint64_t dest;
  uint64_t msg;
  bool src_treated;
  bool dest_treated;
} ElEdge;

typedef struct ElClassTotals {
  uint64_t m_tt;
  uint64_t m_tc;
  uint64_t m_ct;
  uint64_t m_cc;
  uint64_t n_tt;
  uint64_t n_tc;
  uint64_t n_ct;
  uint64_t n_cc;
  uint64_t n_treated;
  uint64_t n_control;
} ElClassTotals;

typedef struct ElEstimates {
  double corrected_total_effect_abs;
  double corrected_lift_pct;
  double alpha_hat;
  double q1_hat;
  double standard_send_lift_pct;
  double standard_receive_lift_pct;
  double approx_lift_pct;
  double approx_alpha;
} ElEstimates;

typedef struct ElPermutationSummary {
  double observed;
  double p_value;
  double ci_low;
  double ci_high;
  double null_mean;
  double null_sd;
  double undefined_rate;
  bool reliable;
} ElPermutationSummary;

typedef struct ElSimParams {
  uint32_t n;
  double p;
  double lambda;
  double q1;
  double q2;
  double alpha;
  /**
   * Reply chain cap; zero lets chains run until they die out.
   */
  uint32_t max_chain_depth;
  uint64_t seed;
  bool perfect_affinity;
} ElSimParams;

typedef struct ElSimTruth {
  uint64_t n_treated;
  uint64_t n_control;
  double expected_m_tt;
  double expected_m_tc;
  double expected_m_ct;
  double expected_m_cc;
  double true_corrected_lift;
  double true_alpha;
  double true_q1;
  double true_q2;
  double counterfactual_total_at_0;
  double counterfactual_total_at_1;
} ElSimTruth;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *el_version(void);

/**
 * Message of the last failed call on this thread, or NULL. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *el_last_error(void);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library and not yet freed.
 */
void el_string_free(char *s);

struct ElConfig el_config_default(void);

struct ElEdges *el_edges_new(void);

/**
 * # Safety
 * `edges` must be NULL or a handle from this library, not yet freed.
 */
void el_edges_free(struct ElEdges *edges);

/**
 * Appends one record. Duplicate pairs are summed at analysis time.
 *
 * # Safety
 * `edges` must be a live handle from this library.
 */
enum ElStatus el_edges_push(struct ElEdges *edges,
                            uint64_t src,
                            uint64_t dest,
                            uint64_t msg,
                            bool src_treated,
                            bool dest_treated);

/**
 * Reads an edge file into a new handle stored in `*out`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum ElStatus el_edges_load(const char *path, bool drop_self_loops, struct ElEdges **out);

/**
 * Number of records held, or 0 for NULL.
 *
 * # Safety
 * `edges` must be NULL or a live handle.
 */
size_t el_edges_len(const struct ElEdges *edges);

/**
 * # Safety
 * `edges` must be a live handle and `out` a writable pointer.
 */
enum ElStatus el_edges_get(const struct ElEdges *edges, size_t index, struct ElEdge *out);

/**
 * Class totals with pair counts. Zero in both sizes infers them from the
 * edges.
 *
 * # Safety
 * `edges` must be a live handle and `out` a writable pointer.
 */
enum ElStatus el_class_totals(const struct ElEdges *edges,
                              uint64_t n_treated,
                              uint64_t n_control,
                              struct ElClassTotals *out);

/**
 * Point estimates without permutation tests.
 *
 * # Safety
 * `edges` and `config` must be valid pointers and `out` writable.
 */
enum ElStatus el_estimate(const struct ElEdges *edges,
                          const struct ElConfig *config,
                          struct ElEstimates *out);

/**
 * Permutation test of one statistic, named as on the command line (for
 * example `corrected_lift`), under the configured mode.
 *
 * # Safety
 * `edges`, `config` and `statistic` must be valid pointers and `out` writable.
 */
enum ElStatus el_permutation_test(const struct ElEdges *edges,
                                  const struct ElConfig *config,
                                  const char *statistic,
                                  struct ElPermutationSummary *out);

/**
 * Full analysis; the new report handle is stored in `*out`.
 *
 * # Safety
 * `edges` and `config` must be valid pointers and `out` writable.
 */
enum ElStatus el_analyze(const struct ElEdges *edges,
                         const struct ElConfig *config,
                         struct ElReport **out);

/**
 * # Safety
 * `report` must be NULL or a live handle.
 */
void el_report_free(struct ElReport *report);

/**
 * Report as JSON; free with `el_string_free`. NULL on failure.
 *
 * # Safety
 * `report` must be a live handle.
 */
char *el_report_json(const struct ElReport *report);

/**
 * Report as sectioned text; free with `el_string_free`. NULL on failure.
 *
 * # Safety
 * `report` must be a live handle.
 */
char *el_report_text(const struct ElReport *report);

/**
 * # Safety
 * `report` must be a live handle and `out` writable.
 */
enum ElStatus el_report_estimates(const struct ElReport *report, struct ElEstimates *out);

/**
 * # Safety
 * `report` must be a live handle and `out` writable.
 */
enum ElStatus el_report_class_totals(const struct ElReport *report, struct ElClassTotals *out);

struct ElSimParams el_sim_params_default(void);

/**
 * Simulates an experiment into a new edge handle. `truth` may be NULL.
 *
 * # Safety
 * `params` must be valid, `out` writable and `truth` NULL or writable.
 */
enum ElStatus el_simulate(const struct ElSimParams *params,
                          struct ElEdges **out,
                          struct ElSimTruth *truth);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EDGELIFT_H */
