#ifndef VARSTOP_H
#define VARSTOP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum VsCase {
  VS_CASE_INFINITE_VALUE = 0,
  VS_CASE_RECURRENT_BOUNDED = 1,
  VS_CASE_CASE_I = 2,
  VS_CASE_CASE_II = 3,
  VS_CASE_CASE_III = 4,
  VS_CASE_SPECIAL_TRANSIENT_I = 5,
  VS_CASE_SPECIAL_TRANSIENT_II = 6,
  VS_CASE_UNSUPPORTED_MARGINAL = 7,
} VsCase;

typedef enum VsRuleKind {
  VS_RULE_KIND_IMMEDIATE = 0,
  VS_RULE_KIND_EXIT = 1,
  VS_RULE_KIND_MIX = 2,
  VS_RULE_KIND_WHOLE_INTERVAL = 3,
  VS_RULE_KIND_EPSILON_FAMILY = 4,
} VsRuleKind;

// Result code of every exported function.
typedef enum VsStatus {
  VS_STATUS_OK = 0,
  VS_STATUS_NULL_POINTER = 1,
  VS_STATUS_INVALID_ARGUMENT = 2,
  VS_STATUS_CONFIG = 3,
  VS_STATUS_DOMAIN = 4,
  VS_STATUS_LIMIT_UNDETERMINED = 5,
  VS_STATUS_UNSUPPORTED = 6,
  VS_STATUS_NUMERICAL = 7,
  VS_STATUS_PANIC = 8,
} VsStatus;

// Opaque diffusion handle.
typedef struct VsDiffusion VsDiffusion;

// Flattened solution. Fields that do not apply are NaN.
//
// For `Mix`, the rule exits `(a, b)` with probability `p` and
// `(a2, b2)` otherwise. `mean_check` is 1 (pass), 0 (fail) or -1 (exempt).
typedef struct VsSolution {
  double x;
  double value;
  enum VsCase case_tag;
  enum VsRuleKind rule_kind;
  double a;
  double b;
  double p;
  double a2;
  double b2;
  double c_star;
  double z_lo;
  double z_hi;
  double duality_gap;
  int32_t mean_check;
} VsSolution;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *vs_version(void);

// Message of the last failed call on this thread, or null.
// The pointer stays valid until the next call on the same thread.
const char *vs_last_error(void);

// Geometric Brownian motion `dX = μX dt + σX dW`.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum VsStatus vs_diffusion_gbm(double mu, double sigma, struct VsDiffusion **out);

// Jacobi diffusion `dX = (a - bX) dt + σ√(X(1-X)) dW` on `(0, 1)`.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum VsStatus vs_diffusion_jacobi(double a, double b, double sigma, struct VsDiffusion **out);

// The built-in piecewise scale whose optimum needs randomization.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum VsStatus vs_diffusion_piecewise_randomized(struct VsDiffusion **out);

// Build a diffusion from the `[diffusion]` block of a TOML document.
//
// # Safety
// `toml` must be a NUL-terminated UTF-8 string and `out` a valid pointer.
enum VsStatus vs_diffusion_from_toml(const char *toml, struct VsDiffusion **out);

// Release a handle. Null is ignored.
//
// # Safety
// `d` must come from a `vs_diffusion_*` constructor and not be used afterwards.
void vs_diffusion_free(struct VsDiffusion *d);

// # Safety
// `d` must be a live handle and `out` a valid pointer.
enum VsStatus vs_classify(const struct VsDiffusion *d, double x, enum VsCase *out);

// Probabilities of leaving `(a, b)` through `a` and through `b`.
//
// # Safety
// `d` must be a live handle; `p_lower` and `p_upper` valid pointers.
enum VsStatus vs_hit_prob(const struct VsDiffusion *d,
                          double x,
                          double a,
                          double b,
                          double *p_lower,
                          double *p_upper);

// Variance of the exit position of `(a, b)` started at `x`.
//
// # Safety
// `d` must be a live handle and `out` a valid pointer.
enum VsStatus vs_exit_variance(const struct VsDiffusion *d,
                               double x,
                               double a,
                               double b,
                               double *out);

// Solve the variance problem at `x`. The duality gap is filled when the
// game route applies.
//
// # Safety
// `d` must be a live handle and `out` a valid pointer.
enum VsStatus vs_solve(const struct VsDiffusion *d, double x, struct VsSolution *out);

// Solve at `n` points. Failed points get NaN values; the first failure is
// reported through the status and `vs_last_error`.
//
// # Safety
// `d` must be a live handle, `xs` readable and `out` writable for `n` items.
enum VsStatus vs_value_profile(const struct VsDiffusion *d,
                               const double *xs,
                               size_t n,
                               double *out);

// Dual game value and optimal center at `x`.
//
// # Safety
// `d` must be a live handle; `c_star` and `value` valid pointers.
enum VsStatus vs_game(const struct VsDiffusion *d, double x, double *c_star, double *value);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VARSTOP_H */
