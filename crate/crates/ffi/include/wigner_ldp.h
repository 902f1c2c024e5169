#ifndef WIGNER_LDP_H
#define WIGNER_LDP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Return codes of every fallible function.
typedef enum WlStatus {
  WL_STATUS_OK = 0,
  WL_STATUS_NULL_POINTER = 1,
  // Malformed input: bad UTF-8, unknown profile name, invalid TOML or
  // profile, argument out of range.
  WL_STATUS_INVALID_ARGUMENT = 2,
  // The point lies inside the support where only `Im z > 0` is allowed.
  WL_STATUS_BELOW_EDGE = 3,
  WL_STATUS_NON_CONVERGENCE = 4,
  // Any other numerical failure.
  WL_STATUS_NUMERIC = 5,
  // An output buffer is shorter than required.
  WL_STATUS_BUFFER_TOO_SMALL = 6,
  WL_STATUS_PANIC = 7,
} WlStatus;

// Opaque handle to a variance profile with its cached spectral data.
typedef struct WlModel WlModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Creates a model from a built-in profile name (`constant`, `wishart`,
// `two-block`, `block-third`).
//
// # Safety
// `name` must be a NUL-terminated string and `out` a valid pointer.
enum WlStatus wl_model_from_name(const char *name, struct WlModel **out);

// Creates a model from a TOML profile document. Relative grid-file paths
// resolve against the current directory.
//
// # Safety
// `toml` must be a NUL-terminated string and `out` a valid pointer.
enum WlStatus wl_model_from_toml(const char *toml, struct WlModel **out);

// Releases a model. Passing null is a no-op.
//
// # Safety
// `model` must come from a constructor of this library and not be used
// afterwards.
void wl_model_free(struct WlModel *model);

// Number of blocks `p` of the profile.
//
// # Safety
// `model` and `out` must be valid pointers.
enum WlStatus wl_model_blocks(const struct WlModel *model, size_t *out);

// Right edge of the support of the limiting spectral measure.
//
// # Safety
// `model` and `out` must be valid pointers.
enum WlStatus wl_model_edge(const struct WlModel *model, double *out);

// Solves the Dyson system at `z = re + i·im` and writes the unit-mass
// block transforms `m_k(z)` into `m_re`/`m_im`, each of capacity `len`
// (at least the block count). Real `z` must lie above the edge.
//
// # Safety
// `model` must be valid; `m_re` and `m_im` must point to `len` doubles.
enum WlStatus wl_dyson_solve(const struct WlModel *model,
                             double re,
                             double im,
                             double *m_re,
                             double *m_im,
                             size_t len);

// Stieltjes transform `G(z) = Σ_k w_k m_k(z)` of the limiting measure.
//
// # Safety
// `model`, `out_re` and `out_im` must be valid pointers.
enum WlStatus wl_stieltjes(const struct WlModel *model,
                           double re,
                           double im,
                           double *out_re,
                           double *out_im);

// Rate function `I(x)` of the largest eigenvalue. Below the edge the rate
// is `+inf`. When `psi_star` is non-null it receives the optimal block
// direction (capacity `len`, at least the block count); `theta_star` may
// be null.
//
// # Safety
// `model` and `rate` must be valid; optional outputs null or valid.
enum WlStatus wl_rate_function(const struct WlModel *model,
                               double x,
                               double *rate,
                               double *theta_star,
                               double *psi_star,
                               size_t len);

// Copies the calling thread's last error message (NUL-terminated,
// truncated to fit) into `buf` and returns the full message length
// excluding the terminator. With a null `buf` only the length is returned.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t wl_last_error_message(char *buf, size_t len);

// Library version as a static NUL-terminated string.
const char *wl_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WIGNER_LDP_H */
