#ifndef COEVOLVE_H
#define COEVOLVE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes shared by every function in this interface.
typedef enum CoevolveStatus {
  COEVOLVE_STATUS_OK = 0,
  COEVOLVE_STATUS_NULL_POINTER = 1,
  COEVOLVE_STATUS_INVALID_ARGUMENT = 2,
  // A linear-algebra routine failed or a state became degenerate.
  COEVOLVE_STATUS_NUMERICAL = 3,
  // The simulator already reached its horizon.
  COEVOLVE_STATUS_FINISHED = 4,
  // The caller's buffer is too small; the required length is reported.
  COEVOLVE_STATUS_BUFFER_TOO_SMALL = 5,
  // A Rust panic was caught at the boundary.
  COEVOLVE_STATUS_INTERNAL = 6,
} CoevolveStatus;

// Opaque simulator handle.
typedef struct CoevolveSimulator CoevolveSimulator;

// Settings for a single simulated run.
//
// `probs` may be null, in which case the `k` texts start uniform.
typedef struct CoevolveParams {
  // Samples per update (N).
  size_t n;
  // Horizon in macro steps (T).
  size_t steps;
  size_t dim;
  size_t k;
  const double *probs;
  // Initial covariance scale, each component starts at `cov_scale·I`.
  double cov_scale;
  // Text updates per macro step.
  size_t m_t;
  // Image updates per macro step.
  size_t n_t;
  // Nonzero selects `N·p_i` image counts.
  uint8_t deterministic_counts;
  // Corpus injection probability; ignored when `epsilon` is 0.
  double alpha;
  double epsilon;
  // User images per text and step; 0 disables image injection.
  size_t n0;
} CoevolveParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Creates a simulator for run `run` of base seed `seed`.
//
// The trajectory is identical to the one the command-line tool produces for
// the same settings, seed and run index.
//
// # Safety
// `params` must point at a valid [`CoevolveParams`] whose `probs` (if not
// null) holds `k` doubles; `out` must be valid for a pointer write.
enum CoevolveStatus coevolve_simulator_new(const struct CoevolveParams *params,
                                           uint64_t seed,
                                           uint64_t run,
                                           struct CoevolveSimulator **out);

// Releases a simulator. Null is accepted and ignored.
//
// # Safety
// `sim` must come from [`coevolve_simulator_new`] and not be used afterwards.
void coevolve_simulator_free(struct CoevolveSimulator *sim);

// Advances one macro step.
//
// # Safety
// `sim` must be a live handle.
enum CoevolveStatus coevolve_simulator_step(struct CoevolveSimulator *sim);

// Current macro step index.
//
// # Safety
// `sim` must be a live handle and `out` valid for a write.
enum CoevolveStatus coevolve_simulator_time(const struct CoevolveSimulator *sim, size_t *out);

// Current corpus size, which grows with text injection.
//
// # Safety
// `sim` must be a live handle and `out` valid for a write.
enum CoevolveStatus coevolve_simulator_num_texts(const struct CoevolveSimulator *sim, size_t *out);

// Copies the text probabilities into `buf`.
//
// `written` always receives the corpus size; if `len` is smaller the call
// returns `BufferTooSmall` and copies nothing.
//
// # Safety
// `sim` must be a live handle, `buf` valid for `len` doubles and `written`
// valid for a write.
enum CoevolveStatus coevolve_simulator_probs(const struct CoevolveSimulator *sim,
                                             double *buf,
                                             size_t len,
                                             size_t *written);

// Text diversity `1 − Σ p²` of the current state.
//
// # Safety
// `sim` must be a live handle and `out` valid for a write.
enum CoevolveStatus coevolve_simulator_text_diversity(const struct CoevolveSimulator *sim,
                                                      double *out);

// Image diversity and fidelity of component `index`.
//
// # Safety
// `sim` must be a live handle; `diversity` and `fidelity` valid for writes.
enum CoevolveStatus coevolve_simulator_image_metrics(const struct CoevolveSimulator *sim,
                                                     size_t index,
                                                     double *diversity,
                                                     double *fidelity);

// Copies the most recent error message of this thread into `buf` as a
// NUL-terminated string, truncating if needed.
//
// Returns the full message length excluding the terminator.
//
// # Safety
// `buf` must be valid for `len` bytes or null with `len == 0`.
size_t coevolve_last_error(char *buf, size_t len);

// Static description of a status code.
const char *coevolve_status_str(enum CoevolveStatus status);

// `(1 − 1/N)^t · H0`.
double coevolve_diversity_floor(double h0, size_t n, size_t t);

// `1 − (d+1) / (8(N+1)p)`, clamped to `[0, 1]`.
double coevolve_image_rate_approx(size_t d, size_t n, double p);

double coevolve_matthew_ratio_bound(size_t d, size_t n, size_t k, double eps);

double coevolve_text_injection_floor(double alpha, double eps, size_t n);

// # Safety
// `out` must be valid for a write.
enum CoevolveStatus coevolve_frozen_text_fidelity_bound(double c,
                                                        double rho,
                                                        size_t n,
                                                        double p,
                                                        double *out);

// # Safety
// `out` must be valid for a write.
enum CoevolveStatus coevolve_image_injection_diversity_floor(double alpha_wishart,
                                                             size_t n,
                                                             size_t n0,
                                                             double tr_sqrt_user,
                                                             double *out);

// Writes the fidelity limit to `out`, or positive infinity when the
// recursion is not contractive.
//
// # Safety
// `out` must be valid for a write.
enum CoevolveStatus coevolve_image_injection_fidelity_limit(size_t n,
                                                            double p,
                                                            size_t n0,
                                                            double tr_sigma0,
                                                            double *out);

// Monte Carlo estimate of the Wishart square-root scalar and its standard
// error, drawn from the stream of `seed`.
//
// # Safety
// `alpha` and `stderr` must be valid for writes.
enum CoevolveStatus coevolve_estimate_wishart_alpha(size_t d,
                                                    size_t dof,
                                                    size_t samples,
                                                    uint64_t seed,
                                                    double *alpha,
                                                    double *stderr);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COEVOLVE_H */
