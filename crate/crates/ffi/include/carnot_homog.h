#ifndef CARNOT_HOMOG_H
#define CARNOT_HOMOG_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes shared by all entry points.
typedef enum CarnotStatus {
  CARNOT_STATUS_OK = 0,
  // Null pointer, bad length or invalid UTF-8.
  CARNOT_STATUS_INVALID_ARGUMENT = 1,
  CARNOT_STATUS_INPUT = 2,
  CARNOT_STATUS_RANGE = 3,
  CARNOT_STATUS_INFEASIBLE = 4,
  CARNOT_STATUS_BUDGET = 5,
  CARNOT_STATUS_SCHEMA = 6,
  CARNOT_STATUS_IO = 7,
  // A verification run completed with failing checks.
  CARNOT_STATUS_VERIFY_FAILED = 8,
  // Internal panic; the handle involved should be discarded.
  CARNOT_STATUS_PANIC = 9,
} CarnotStatus;

// One seeded environment on a group.
typedef struct CarnotEnv CarnotEnv;

// A built-in Carnot group.
typedef struct CarnotGroup CarnotGroup;

// An effective Lagrangian loaded from a saved table.
typedef struct CarnotLbar CarnotLbar;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread; empty when none.
// Valid until the next failing call on the same thread.
const char *carnot_last_error(void);

// Library version as a static NUL-terminated string.
const char *carnot_version(void);

// Create a built-in group by name (`heisenberg1` or `engel`).
//
// # Safety
// `name` must be a NUL-terminated string and `out` a valid pointer.
enum CarnotStatus carnot_group_new(const char *name, struct CarnotGroup **out);

// # Safety
// `g` must come from [`carnot_group_new`] and not be used afterwards.
void carnot_group_free(struct CarnotGroup *g);

// Topological dimension; 0 for a null handle.
//
// # Safety
// `g` must be null or a live group handle.
size_t carnot_group_dim(const struct CarnotGroup *g);

// Dimension of the horizontal layer; 0 for a null handle.
//
// # Safety
// `g` must be null or a live group handle.
size_t carnot_group_rank(const struct CarnotGroup *g);

// `out = x ∘ y`.
//
// # Safety
// Pointers must be valid for `len` doubles.
enum CarnotStatus carnot_group_compose(const struct CarnotGroup *g,
                                       const double *x,
                                       const double *y,
                                       double *out,
                                       size_t len);

// `out = x⁻¹`.
//
// # Safety
// Pointers must be valid for `len` doubles.
enum CarnotStatus carnot_group_inverse(const struct CarnotGroup *g,
                                       const double *x,
                                       double *out,
                                       size_t len);

// `out = δ_λ(x)`.
//
// # Safety
// Pointers must be valid for `len` doubles.
enum CarnotStatus carnot_group_dilate(const struct CarnotGroup *g,
                                      double lambda,
                                      const double *x,
                                      double *out,
                                      size_t len);

// Homogeneous norm of `x`.
//
// # Safety
// `x` must be valid for `len` doubles and `out` writable.
enum CarnotStatus carnot_group_hnorm(const struct CarnotGroup *g,
                                     const double *x,
                                     size_t len,
                                     double *out);

// Build an environment from a JSON environment block, for example
// `{"kind": "product", "seed": 3, "v_amplitude": 0.5}`.
//
// # Safety
// `g` must be a live group, `config_json` NUL-terminated, `out` valid.
enum CarnotStatus carnot_env_new(const struct CarnotGroup *g,
                                 const char *config_json,
                                 struct CarnotEnv **out);

// # Safety
// `env` must come from [`carnot_env_new`] and not be used afterwards.
void carnot_env_free(struct CarnotEnv *env);

// Coefficients `a(x)` and `V(x)`.
//
// # Safety
// `x` must be valid for `len` doubles; outputs must be writable.
enum CarnotStatus carnot_env_sample(const struct CarnotEnv *env,
                                    const double *x,
                                    size_t len,
                                    double *a_out,
                                    double *v_out);

// Minimal action from `start` to `target` over `[0, horizon]` at scale
// `epsilon`. `solver_json` may be null for default settings.
//
// # Safety
// Points must be valid for `len` doubles; strings NUL-terminated or null;
// outputs writable (`residual_out` may be null).
enum CarnotStatus carnot_action(const struct CarnotEnv *env,
                                double beta,
                                double epsilon,
                                const double *start,
                                const double *target,
                                size_t len,
                                double horizon,
                                size_t n_pieces,
                                const char *solver_json,
                                double *value_out,
                                double *residual_out);

// Minimal action along the X-line of slope `q` between times `a` and `b`.
//
// # Safety
// `q` must be valid for `rank` doubles; `solver_json` NUL-terminated or
// null; `value_out` writable.
enum CarnotStatus carnot_mu(const struct CarnotEnv *env,
                            double beta,
                            const double *q,
                            size_t rank,
                            double a,
                            double b,
                            size_t n_pieces,
                            const char *solver_json,
                            double *value_out);

// Load an effective Lagrangian table saved by the command-line tool.
//
// # Safety
// `table_json` must be NUL-terminated and `out` valid.
enum CarnotStatus carnot_lbar_from_json(const char *table_json, struct CarnotLbar **out);

// # Safety
// `lbar` must come from [`carnot_lbar_from_json`] and not be used afterwards.
void carnot_lbar_free(struct CarnotLbar *lbar);

// Value of the convexified effective Lagrangian at slope `q`.
//
// # Safety
// `q` must be valid for `rank` doubles and `out` writable.
enum CarnotStatus carnot_lbar_eval(const struct CarnotLbar *lbar,
                                   const double *q,
                                   size_t rank,
                                   double *out);

// Run a task (`action`, `mu`, `effective-lagrangian`, `limit-solve`,
// `converge` or `verify`) from a JSON config file, as the command-line
// tool does. `out_dir` may be null to use the config's directory; a
// `workers` of 0 uses all cores.
//
// # Safety
// Strings must be NUL-terminated (`out_dir` may be null).
enum CarnotStatus carnot_run(const char *task,
                             const char *config_path,
                             const char *out_dir,
                             size_t workers);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CARNOT_HOMOG_H */
