#ifndef RAVKIT_H
#define RAVKIT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RavkitStatus {
  RAVKIT_STATUS_OK = 0,
  RAVKIT_STATUS_NULL_POINTER = 1,
  RAVKIT_STATUS_INVALID_ARGUMENT = 2,
  RAVKIT_STATUS_DEGENERATE_DISTRIBUTION = 3,
  RAVKIT_STATUS_FIT_DEGENERATE = 4,
  RAVKIT_STATUS_BUDGET_EXCEEDED = 5,
  RAVKIT_STATUS_PARSE = 6,
  RAVKIT_STATUS_IO = 7,
  RAVKIT_STATUS_JSON = 8,
  RAVKIT_STATUS_UTF8 = 9,
  RAVKIT_STATUS_PANIC = 10,
} RavkitStatus;

typedef enum RavkitSequenceKind {
  RAVKIT_SEQUENCE_KIND_RAV = 0,
  RAVKIT_SEQUENCE_KIND_XEB = 1,
} RavkitSequenceKind;

typedef enum RavkitNoiseKind {
  RAVKIT_NOISE_KIND_NOISELESS = 0,
  RAVKIT_NOISE_KIND_GLOBAL_DEPOLARIZING = 1,
  RAVKIT_NOISE_KIND_PER_GATE_DEPOLARIZING = 2,
  RAVKIT_NOISE_KIND_COHERENT_OVERROTATION = 3,
} RavkitNoiseKind;

typedef enum RavkitDecayModel {
  RAVKIT_DECAY_MODEL_EXPONENTIAL = 0,
  RAVKIT_DECAY_MODEL_GAUSSIAN = 1,
} RavkitDecayModel;

/**
 * Opaque verification sequence.
 */
typedef struct RavkitSequence RavkitSequence;

/**
 * A noise model: `param` is λ, the per-gate rate, or δ depending on `kind`.
 */
typedef struct RavkitNoise {
  enum RavkitNoiseKind kind;
  double param;
} RavkitNoise;

/**
 * Result of a decay fit. `chi2_reduced` is NaN when fewer than two bins
 * carry an error estimate.
 */
typedef struct RavkitFit {
  double alpha;
  double chi2_reduced;
  double fidelity_loss;
} RavkitFit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *ravkit_version(void);

/**
 * Message of the last failed call on this thread, or NULL. Valid until the
 * next call into the library on this thread.
 */
const char *ravkit_last_error_message(void);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library and not yet freed.
 */
void ravkit_string_free(char *s);

/**
 * # Safety
 * `seq` must be NULL or a handle returned by this library and not yet freed.
 */
void ravkit_sequence_free(struct RavkitSequence *seq);

/**
 * Parse a circuit file held in memory.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` writable.
 */
enum RavkitStatus ravkit_sequence_from_text(const char *text, struct RavkitSequence **out);

/**
 * Serialize as a circuit file with the given id. Free the result with
 * [`ravkit_string_free`].
 *
 * # Safety
 * `seq` must be a live handle and `out` writable.
 */
enum RavkitStatus ravkit_sequence_to_text(const struct RavkitSequence *seq, size_t id, char **out);

/**
 * Generate a RAV sequence with `m0` random layers. `plan_json` is an
 * experiment plan object.
 *
 * # Safety
 * `plan_json` must be a NUL-terminated string and `out` writable.
 */
enum RavkitStatus ravkit_generate_rav(const char *plan_json,
                                      size_t m0,
                                      uint64_t seed,
                                      struct RavkitSequence **out);

/**
 * An XEB sequence of random layers from the plan's design, as long as `rav`.
 *
 * # Safety
 * `rav` must be a live handle, `plan_json` a NUL-terminated string and `out`
 * writable.
 */
enum RavkitStatus ravkit_generate_xeb_matched(const struct RavkitSequence *rav,
                                              const char *plan_json,
                                              uint64_t seed,
                                              struct RavkitSequence **out);

/**
 * # Safety
 * `seq` must be NULL or a live handle.
 */
size_t ravkit_sequence_num_qubits(const struct RavkitSequence *seq);

/**
 * # Safety
 * `seq` must be NULL or a live handle.
 */
size_t ravkit_sequence_num_layers(const struct RavkitSequence *seq);

/**
 * # Safety
 * `seq` must be a live handle and `out` writable.
 */
enum RavkitStatus ravkit_sequence_kind(const struct RavkitSequence *seq,
                                       enum RavkitSequenceKind *out);

/**
 * Recorded inversion error of a RAV sequence.
 *
 * # Safety
 * `seq` must be a live handle and `out` writable.
 */
enum RavkitStatus ravkit_sequence_epsilon(const struct RavkitSequence *seq, double *out);

/**
 * Ideal and noisy outcome distributions from basis state `x0`. Both buffers
 * hold `len == 2^n` doubles; either may be NULL.
 *
 * # Safety
 * Non-null buffers must be writable for `len` doubles.
 */
enum RavkitStatus ravkit_simulate(const struct RavkitSequence *seq,
                                  struct RavkitNoise noise,
                                  size_t x0,
                                  double *ideal_out,
                                  double *noisy_out,
                                  size_t len);

/**
 * Sample `shots` outcomes into `outcomes_out`.
 *
 * # Safety
 * `outcomes_out` must be writable for `shots` values.
 */
enum RavkitStatus ravkit_sample_shots(const struct RavkitSequence *seq,
                                      struct RavkitNoise noise,
                                      size_t x0,
                                      size_t shots,
                                      uint64_t seed,
                                      size_t *outcomes_out);

/**
 * RAV fidelity estimate from `P(x0)` and the observed return frequency.
 *
 * # Safety
 * `out` must be writable.
 */
enum RavkitStatus ravkit_f_rav(double p_x0, double q_x0, size_t dim, double *out);

/**
 * XEB fidelity estimate from the ideal distribution and outcome counts,
 * both of length `dim`.
 *
 * # Safety
 * `ideal` and `counts` must be readable for `dim` values; `out` writable.
 */
enum RavkitStatus ravkit_f_xeb(const double *ideal,
                               const uint64_t *counts,
                               size_t dim,
                               uint64_t shots,
                               double *out);

/**
 * Fit `F(m) = A·α^m` or `A·α^{m²}` to one estimate per sequence.
 *
 * # Safety
 * `ms` and `fs` must be readable for `len` values; `out` writable.
 */
enum RavkitStatus ravkit_fit_decay(const size_t *ms,
                                   const double *fs,
                                   size_t len,
                                   enum RavkitDecayModel model,
                                   size_t bin_size,
                                   struct RavkitFit *out);

/**
 * Compile a Haar-random `n`-qubit unitary from R and XX gates and report
 * the final cost.
 *
 * # Safety
 * `cost_out` must be writable.
 */
enum RavkitStatus ravkit_stoq_compile_haar(size_t n_qubits,
                                           size_t iterations,
                                           double delta_beta,
                                           uint64_t seed,
                                           double *cost_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RAVKIT_H */
