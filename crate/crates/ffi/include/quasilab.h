#ifndef QUASILAB_H
#define QUASILAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result code of every fallible call.
 */
typedef enum QlStatus {
  QL_STATUS_OK = 0,
  QL_STATUS_NULL_POINTER = 1,
  QL_STATUS_INVALID_ARGUMENT = 2,
  QL_STATUS_NUMERIC = 3,
  QL_STATUS_BUFFER_TOO_SMALL = 4,
  QL_STATUS_PANIC = 5,
} QlStatus;

/*
 A continued-fraction expansion of a rotation number.
 */
typedef struct QlFrequency QlFrequency;

/*
 An atomic spectral measure.
 */
typedef struct QlMeasure QlMeasure;

/*
 A potential, rotation and phase.
 */
typedef struct QlOperator QlOperator;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version as a static NUL-terminated string.
 */
const char *ql_version(void);

/*
 Copies the calling thread's last error message into `buf` (always
 NUL-terminated when `len > 0`) and returns the full message length.

 # Safety
 `buf` must be null or point to `len` writable bytes.
 */
size_t ql_last_error(char *buf, size_t len);

/*
 Expansion of the golden mean (√5 − 1)/2 to `depth` quotients.

 # Safety
 `out` must be a valid pointer to a handle slot.
 */
enum QlStatus ql_frequency_golden(size_t depth, struct QlFrequency **out);

/*
 Expansion of a decimal string in (0, 1).

 # Safety
 `decimal` must be a NUL-terminated string; `out` a valid handle slot.
 */
enum QlStatus ql_frequency_decimal(const char *decimal, size_t depth, struct QlFrequency **out);

/*
 Liouville-type frequency with growth rate `beta`.

 # Safety
 `out` must be a valid handle slot.
 */
enum QlStatus ql_frequency_liouville(double beta, size_t terms, struct QlFrequency **out);

/*
 # Safety
 `f` must be null or a handle from a `ql_frequency_*` constructor, freed once.
 */
void ql_frequency_free(struct QlFrequency *f);

/*
 Number of stored partial quotients.

 # Safety
 `f` must be a live frequency handle; `out` writable.
 */
enum QlStatus ql_frequency_depth(const struct QlFrequency *f, size_t *out);

/*
 Denominator q_n; fails with `InvalidArgument` beyond the stored depth and
 `Numeric` if q_n does not fit in 64 bits.

 # Safety
 `f` must be a live frequency handle; `out` writable.
 */
enum QlStatus ql_frequency_denominator(const struct QlFrequency *f, size_t n, uint64_t *out);

/*
 Growth-rate estimate max ln q_{n+1}/q_n.

 # Safety
 `f` must be a live frequency handle; `out` writable.
 */
enum QlStatus ql_frequency_beta(const struct QlFrequency *f, double *out);

/*
 Mean-zero sawtooth with the given slope.

 # Safety
 `f` must be a live frequency handle; `out` a valid handle slot.
 */
enum QlStatus ql_operator_sawtooth(const struct QlFrequency *f,
                                   double slope,
                                   double phase,
                                   struct QlOperator **out);

/*
 `coupling · tan(πx)`.

 # Safety
 `f` must be a live frequency handle; `out` a valid handle slot.
 */
enum QlStatus ql_operator_tangent(const struct QlFrequency *f,
                                  double coupling,
                                  double phase,
                                  struct QlOperator **out);

/*
 Zero potential.

 # Safety
 `out` must be a valid handle slot.
 */
enum QlStatus ql_operator_free_potential(struct QlOperator **out);

/*
 # Safety
 `op` must be null or a handle from a `ql_operator_*` constructor, freed once.
 */
void ql_operator_free(struct QlOperator *op);

/*
 Phase-averaged Lyapunov estimate over `phases` random phases.

 # Safety
 `op` must be a live operator handle; `out` writable.
 */
enum QlStatus ql_lyapunov(const struct QlOperator *op,
                          double energy,
                          size_t n,
                          size_t phases,
                          uint64_t seed,
                          double *out);

/*
 Full-line transform M(z) = ⟨δ_0, G δ_0⟩ + ⟨δ_1, G δ_1⟩ at z = re + i·im.

 # Safety
 `op` must be a live operator handle; `out_re` and `out_im` writable.
 */
enum QlStatus ql_full_line_m(const struct QlOperator *op,
                             double re,
                             double im,
                             double tol,
                             double *out_re,
                             double *out_im);

/*
 Spectral measure of the truncation to [−n, n], weighted by |ψ(0)|² + |ψ(1)|²
 (total mass 2).

 # Safety
 `op` must be a live operator handle; `out` a valid handle slot.
 */
enum QlStatus ql_measure_new(const struct QlOperator *op,
                             size_t n,
                             size_t bc_average,
                             struct QlMeasure **out);

/*
 # Safety
 `m` must be null or a handle from [`ql_measure_new`], freed once.
 */
void ql_measure_free(struct QlMeasure *m);

/*
 Copies atoms into caller arrays of capacity `cap`. `out_len` always
 receives the atom count; `BufferTooSmall` is returned if `cap` is short.

 # Safety
 `m` must be a live measure handle; `energies` and `weights` must each hold
 `cap` doubles (or be null when `cap` is 0); `out_len` writable.
 */
enum QlStatus ql_measure_atoms(const struct QlMeasure *m,
                               double *energies,
                               double *weights,
                               size_t cap,
                               size_t *out_len);

/*
 Runs one identity family at self-test size; `out_pass` receives 1 or 0.

 # Safety
 `family` must be a NUL-terminated string; `out_pass` writable.
 */
enum QlStatus ql_selftest(const char *family, uint64_t seed, int *out_pass);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QUASILAB_H */
