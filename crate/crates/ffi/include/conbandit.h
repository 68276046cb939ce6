#ifndef CONBANDIT_H
#define CONBANDIT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum CbStatus {
  CB_STATUS_OK = 0,
  CB_STATUS_NULL_POINTER = 1,
  CB_STATUS_INVALID_INPUT = 2,
  CB_STATUS_DATA_ERROR = 3,
  CB_STATUS_CONFIG_ERROR = 4,
  CB_STATUS_IO_ERROR = 5,
  CB_STATUS_PANIC = 6,
} CbStatus;

typedef enum CbActionKind {
  CB_ACTION_KIND_ITEM = 0,
  CB_ACTION_KIND_KEY_TERM = 1,
} CbActionKind;

typedef enum CbPolicyKind {
  CB_POLICY_KIND_HIER_UCB = 0,
  CB_POLICY_KIND_UCB = 1,
  CB_POLICY_KIND_HIER_LINUCB = 2,
  CB_POLICY_KIND_LINUCB = 3,
  CB_POLICY_KIND_FREQCON_LINUCB = 4,
  CB_POLICY_KIND_ORACLE = 5,
} CbPolicyKind;

/**
 * An environment handle.
 */
typedef struct CbEnv CbEnv;

/**
 * A policy handle.
 */
typedef struct CbPolicy CbPolicy;

/**
 * A recorded episode.
 */
typedef struct CbTrace CbTrace;

typedef struct CbAction {
  enum CbActionKind kind;
  uint32_t id;
} CbAction;

typedef struct CbTraceRow {
  uint64_t round;
  struct CbAction action;
  double reward;
  double expected;
  double regret_inc;
  double cum_regret;
  bool switching;
  bool pending;
} CbTraceRow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null if none. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *cb_last_error(void);

/**
 * Bernoulli environment with contiguous key-term blocks and item means
 * `i / n`; one-hot contexts are attached so contextual policies can run.
 *
 * # Safety
 * `out` must be a valid pointer to write a handle into.
 */
enum CbStatus cb_env_synthetic_stochastic(size_t num_keyterms,
                                          size_t items_per_keyterm,
                                          double lambda,
                                          uint64_t seed,
                                          struct CbEnv **out);

/**
 * Linear environment with Gaussian noise; `dim == 0` selects one-hot
 * contexts, otherwise random unit vectors of that dimension.
 *
 * # Safety
 * `out` must be a valid pointer to write a handle into.
 */
enum CbStatus cb_env_synthetic_contextual(size_t num_keyterms,
                                          size_t items_per_keyterm,
                                          size_t dim,
                                          double lambda,
                                          double noise_sigma,
                                          uint64_t seed,
                                          struct CbEnv **out);

/**
 * # Safety
 * `env` must be null or a handle from this library that was not freed.
 */
void cb_env_free(struct CbEnv *env);

/**
 * # Safety
 * Pointers must be valid; `env` a live handle.
 */
enum CbStatus cb_env_size(const struct CbEnv *env, size_t *num_items, size_t *num_keyterms);

/**
 * # Safety
 * Pointers must be valid; `env` a live handle.
 */
enum CbStatus cb_env_expected_reward(const struct CbEnv *env, struct CbAction action, double *out);

/**
 * # Safety
 * Pointers must be valid; `env` a live handle.
 */
enum CbStatus cb_env_optimal(const struct CbEnv *env, double *value, struct CbAction *action);

/**
 * Samples one reward for `action` at 1-based `round`.
 *
 * # Safety
 * Pointers must be valid; `env` a live handle.
 */
enum CbStatus cb_env_step(struct CbEnv *env, struct CbAction action, uint64_t round, double *out);

/**
 * Builds a policy for `env`. `gamma` and `alpha` are ignored by policies
 * that do not use them.
 *
 * # Safety
 * Pointers must be valid; `env` a live handle.
 */
enum CbStatus cb_policy_new(const struct CbEnv *env,
                            enum CbPolicyKind kind,
                            double gamma,
                            double alpha,
                            struct CbPolicy **out);

/**
 * # Safety
 * `policy` must be null or a live handle.
 */
void cb_policy_free(struct CbPolicy *policy);

/**
 * # Safety
 * Pointers must be valid; handles live.
 */
enum CbStatus cb_policy_select(struct CbPolicy *policy,
                               const struct CbEnv *env,
                               struct CbAction *out);

/**
 * # Safety
 * Pointers must be valid; handles live.
 */
enum CbStatus cb_policy_update(struct CbPolicy *policy,
                               const struct CbEnv *env,
                               struct CbAction action,
                               double reward);

/**
 * Plays `horizon` rounds of `policy` against `env`.
 *
 * # Safety
 * Pointers must be valid; handles live.
 */
enum CbStatus cb_run_episode(struct CbEnv *env,
                             struct CbPolicy *policy,
                             uint64_t horizon,
                             struct CbTrace **out);

/**
 * # Safety
 * `trace` must be null or a live handle.
 */
void cb_trace_free(struct CbTrace *trace);

/**
 * # Safety
 * Pointers must be valid; `trace` a live handle.
 */
enum CbStatus cb_trace_len(const struct CbTrace *trace, size_t *out);

/**
 * Copies row `index` (0-based) of the trace.
 *
 * # Safety
 * Pointers must be valid; `trace` a live handle.
 */
enum CbStatus cb_trace_row(const struct CbTrace *trace, size_t index, struct CbTraceRow *out);

/**
 * Writes the switch point into `round` and whether one exists into `found`
 * (false when the trace ends with a key-term).
 *
 * # Safety
 * Pointers must be valid; `trace` a live handle.
 */
enum CbStatus cb_trace_switch_point(const struct CbTrace *trace, bool *found, uint64_t *round);

/**
 * # Safety
 * `ratings` must point to `len` doubles; `out` must be valid.
 */
enum CbStatus cb_simple_average(const double *ratings, size_t len, double *out);

/**
 * # Safety
 * `ratings` must point to `len` doubles; `out` must be valid.
 */
enum CbStatus cb_top_alpha_average(const double *ratings, size_t len, double alpha, double *out);

/**
 * # Safety
 * `ratings` and `weights` must each point to `len` doubles; `out` valid.
 */
enum CbStatus cb_weighted_average(const double *ratings,
                                  const double *weights,
                                  size_t len,
                                  double *out);

/**
 * Normal-approximation interval `mean ± z·s/√n`.
 *
 * # Safety
 * `samples` must point to `len` doubles; `low` and `high` valid.
 */
enum CbStatus cb_confidence_interval(const double *samples,
                                     size_t len,
                                     double level,
                                     double *low,
                                     double *high);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CONBANDIT_H */
