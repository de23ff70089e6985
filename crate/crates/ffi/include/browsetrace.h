#ifndef BROWSETRACE_H
#define BROWSETRACE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum BtStatus {
  BT_STATUS_OK = 0,
  BT_STATUS_NULL_POINTER = 1,
  BT_STATUS_INVALID_ARGUMENT = 2,
  BT_STATUS_PARSE_ERROR = 3,
  BT_STATUS_IO_ERROR = 4,
  BT_STATUS_NO_EVENTS = 5,
  BT_STATUS_NOT_FOUND = 6,
  BT_STATUS_DATA_ERROR = 7,
  BT_STATUS_PANIC = 8,
} BtStatus;

/**
 * Sessions reconstructed from a log, grouped by user.
 */
typedef struct BtAnalysis BtAnalysis;

/**
 * Event records in time order.
 */
typedef struct BtEventLog BtEventLog;

/**
 * Cleaning counters.
 */
typedef struct BtCleaningCounts {
  uint64_t events_in;
  uint64_t events_out;
  uint64_t duplicates_removed;
  uint64_t sessions_closed_by_estimate;
  uint64_t windows_closed_by_estimate;
  uint64_t orphans_quarantined;
} BtCleaningCounts;

/**
 * Parallel-browsing summary of one user. Undefined values are NaN.
 */
typedef struct BtParallelSummary {
  double mean_windows;
  double median_tabs;
  /**
   * Share of time with at least 2, 4, 8 and 16 open tabs.
   */
  double tab_share_at_least[4];
  double never_visible_fraction;
  double reuse_ratio;
  double reuse_bound;
} BtParallelSummary;

/**
 * Idle totals over all sessions of one user, in milliseconds.
 */
typedef struct BtIdleTotals {
  uint64_t n_sessions;
  int64_t session_ms;
  int64_t explicit_idle_ms;
  int64_t implicit_idle_ms;
} BtIdleTotals;

/**
 * Four lowercase-hex HMAC-SHA256 digests, NUL-terminated.
 */
typedef struct BtUrlDigests {
  char h_domain[65];
  char h_subdomain[65];
  char h_path[65];
  char h_full[65];
} BtUrlDigests;

/**
 * Report settings. `thresholds_ms` may be NULL for the defaults;
 * `top_users` 0 keeps every user.
 */
typedef struct BtReportConfig {
  const char *input;
  const char *output;
  const int64_t *thresholds_ms;
  size_t n_thresholds;
  size_t top_users;
  size_t top_domains;
  double common_pct;
  bool strict_focus;
  size_t jobs;
} BtReportConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. Valid until
 * the next call into this library from the same thread.
 */
const char *bt_last_error(void);

/**
 * Library version, static storage.
 */
const char *bt_version(void);

/**
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void bt_string_free(char *s);

/**
 * Reads a log file or a directory of log files.
 *
 * # Safety
 * `path` must be NUL-terminated; `out` must be writable.
 */
enum BtStatus bt_log_from_path(const char *path, struct BtEventLog **out);

/**
 * Parses NDJSON records from memory. An empty buffer yields an empty log.
 *
 * # Safety
 * `data` must point to `len` readable bytes (or be NULL with `len` 0);
 * `out` must be writable.
 */
enum BtStatus bt_log_from_buffer(const uint8_t *data, size_t len, struct BtEventLog **out);

/**
 * # Safety
 * `log` must be a live handle or NULL.
 */
size_t bt_log_len(const struct BtEventLog *log);

/**
 * Cleans the log in place. `top_users` 0 keeps every user; `counts` may
 * be NULL.
 *
 * # Safety
 * `log` must be a live handle; `counts` writable or NULL.
 */
enum BtStatus bt_log_clean(struct BtEventLog *log,
                           size_t top_users,
                           struct BtCleaningCounts *counts);

/**
 * # Safety
 * `log` must come from this library and not have been freed.
 */
void bt_log_free(struct BtEventLog *log);

/**
 * Reconstructs sessions. The log stays valid.
 *
 * # Safety
 * `log` must be a live handle; `out` writable.
 */
enum BtStatus bt_analyze(const struct BtEventLog *log, struct BtAnalysis **out);

/**
 * # Safety
 * `a` must be a live handle or NULL.
 */
size_t bt_analysis_user_count(const struct BtAnalysis *a);

/**
 * User id at `index`, users ascending.
 *
 * # Safety
 * `a` must be a live handle; `out` writable.
 */
enum BtStatus bt_analysis_user_id(const struct BtAnalysis *a, size_t index, uint64_t *out);

/**
 * Number of sessions of `user`, 0 when unknown.
 *
 * # Safety
 * `a` must be a live handle or NULL.
 */
size_t bt_analysis_session_count(const struct BtAnalysis *a, uint64_t user);

/**
 * # Safety
 * `a` must be a live handle; `out` writable.
 */
enum BtStatus bt_analysis_parallel(const struct BtAnalysis *a,
                                   uint64_t user,
                                   struct BtParallelSummary *out);

/**
 * Sums over `user`'s sessions; implicit idle uses `threshold_ms`.
 *
 * # Safety
 * `a` must be a live handle; `out` writable.
 */
enum BtStatus bt_analysis_idle(const struct BtAnalysis *a,
                               uint64_t user,
                               int64_t threshold_ms,
                               struct BtIdleTotals *out);

/**
 * Navigation tree of one session as Graphviz DOT (`edge_list` false) or
 * the line-oriented edge list.
 *
 * # Safety
 * `a` must be a live handle; `out` writable.
 */
enum BtStatus bt_analysis_navtree(const struct BtAnalysis *a,
                                  uint64_t user,
                                  uint64_t session,
                                  bool edge_list,
                                  char **out);

/**
 * # Safety
 * `a` must come from this library and not have been freed.
 */
void bt_analysis_free(struct BtAnalysis *a);

/**
 * Hashes `url` under `key` at the four URL levels.
 *
 * # Safety
 * `url` must be NUL-terminated; `key` must point to `key_len` bytes;
 * `out` writable.
 */
enum BtStatus bt_hash_url(const char *url,
                          const uint8_t *key,
                          size_t key_len,
                          struct BtUrlDigests *out);

/**
 * Runs the full report into `config->output`.
 *
 * # Safety
 * `config` must point to a valid [`BtReportConfig`] whose pointers obey
 * their documented contracts.
 */
enum BtStatus bt_run_report(const struct BtReportConfig *config);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BROWSETRACE_H */
