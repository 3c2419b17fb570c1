#ifndef SGUES_H
#define SGUES_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Call outcome.
 */
typedef enum {
  SGUES_STATUS_OK = 0,
  /**
   * A pointer argument was null or an index out of range.
   */
  SGUES_STATUS_INVALID_ARGUMENT = 1,
  /**
   * The document failed to parse or validate.
   */
  SGUES_STATUS_PARSE_ERROR = 2,
  /**
   * Certification failed (missing constraints, no admissible walk, ...).
   */
  SGUES_STATUS_CERTIFY_ERROR = 3,
  /**
   * Signal generation or integration failed.
   */
  SGUES_STATUS_SIMULATION_ERROR = 4,
  /**
   * The requested quantity needs a valid certificate.
   */
  SGUES_STATUS_NOT_VALID = 5,
  /**
   * A panic was caught at the boundary.
   */
  SGUES_STATUS_INTERNAL = 6,
} SguesStatus;

/**
 * An assembled stability certificate.
 */
typedef struct SguesCertificate SguesCertificate;

/**
 * A parsed system document with synthesized Lyapunov data.
 */
typedef struct SguesSystem SguesSystem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the most recent error message into `buffer` (NUL-terminated,
 * truncated to `length`). Returns the full message length in bytes.
 */
size_t sgues_last_error(char *buffer, size_t length);

/**
 * Parses a system specification document (JSON text) and synthesizes its
 * Lyapunov data. Returns null on failure.
 */
SguesSystem *sgues_system_parse(const char *json, SguesStatus *status);

/**
 * Frees a system handle; null is accepted.
 */
void sgues_system_free(SguesSystem *system);

/**
 * Number of modes.
 */
size_t sgues_system_mode_count(const SguesSystem *system);

/**
 * Flow rate bound `lambda_bar(mode)`; NaN for a bad handle or index.
 */
double sgues_system_flow_rate(const SguesSystem *system, size_t mode);

/**
 * Jump gain `r_bar(from, to)`; NaN when the pair carries no jump map.
 */
double sgues_system_jump_gain(const SguesSystem *system, size_t from, size_t to);

/**
 * Combined switching weight `R(length)`; NaN when the graph admits no
 * walk of that length.
 */
double sgues_system_combined_weight(const SguesSystem *system,
                                    uint64_t length,
                                    SguesStatus *status);

/**
 * Assembles a certificate for the given sequence length and balance
 * coefficients (`c_mode` may be null for all-zero coefficients).
 */
SguesCertificate *sgues_certify(const SguesSystem *system,
                                uint64_t length,
                                double c_switch,
                                const double *c_mode,
                                size_t c_mode_len,
                                SguesStatus *status);

/**
 * Scans coefficient grids over the given sequence lengths and returns the
 * best certificate by decay rate (the least-invalid one when none is
 * valid).
 */
SguesCertificate *sgues_certify_sweep(const SguesSystem *system,
                                      const uint64_t *lengths,
                                      size_t lengths_len,
                                      SguesStatus *status);

/**
 * Frees a certificate handle; null is accepted.
 */
void sgues_certificate_free(SguesCertificate *cert);

/**
 * Maximum overshoot `K`.
 */
double sgues_certificate_overshoot(const SguesCertificate *cert);

/**
 * Decay rate `lambda` (negative for invalid certificates).
 */
double sgues_certificate_decay_rate(const SguesCertificate *cert);

/**
 * Aggregate rate `lambda_0`; the certificate is valid iff positive.
 */
double sgues_certificate_lambda0(const SguesCertificate *cert);

bool sgues_certificate_is_valid(const SguesCertificate *cert);

/**
 * Perturbation margin `lambda / (K e^lambda)`; requires a valid
 * certificate.
 */
double sgues_certificate_iiss_margin(const SguesCertificate *cert, SguesStatus *status);

/**
 * Generates an admissible signal for `seed`, simulates the system from a
 * seeded unit initial state over `horizon` seconds and returns the largest
 * ratio of the state norm to the certificate envelope (at most one when
 * the certificate is sound).
 */
double sgues_simulate_max_ratio(const SguesSystem *system,
                                const SguesCertificate *cert,
                                uint64_t seed,
                                double horizon,
                                SguesStatus *status);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SGUES_H */
