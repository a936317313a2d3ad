#ifndef TRANSBIE_H
#define TRANSBIE_H

#include <stddef.h>

// Result of every fallible call.
typedef enum TbStatus {
  TB_STATUS_OK = 0,
  TB_STATUS_NULL_POINTER = 1,
  TB_STATUS_INVALID_ARGUMENT = 2,
  TB_STATUS_NEAR_RESONANCE = 3,
  TB_STATUS_NO_CONVERGENCE = 4,
  TB_STATUS_DOMAIN_ERROR = 5,
  TB_STATUS_BUFFER_TOO_SMALL = 6,
  TB_STATUS_INTERNAL = 7,
} TbStatus;

typedef enum TbFormulation {
  TB_FORMULATION_MIXED = 0,
  TB_FORMULATION_ORDINARY = 1,
} TbFormulation;

// Which trace of a solution to copy out.
typedef enum TbField {
  TB_FIELD_U = 0,
  TB_FIELD_Q = 1,
  // Interior density; empty for the ordinary formulation.
  TB_FIELD_PHI = 2,
} TbField;

// Discretized boundary curve.
typedef struct TbGrid TbGrid;

// Material constants, frequency and coupling constant.
typedef struct TbProblem TbProblem;

// Boundary traces from a solve.
typedef struct TbSolution TbSolution;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copy the last error message of this thread into `buf` (NUL-terminated,
// truncated to `len`). Returns the full message length, or 0 if none.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t tb_last_error(char *buf, size_t len);

// Grid of `n` nodes on a circle of the given radius.
//
// # Safety
// `out` must be a valid pointer to a handle slot.
enum TbStatus tb_grid_circle(double radius, size_t n, struct TbGrid **out);

// Grid on the star-shaped curve with radius
// `r(t) = c[0] + Σ_{m≥1} c[m] cos(mt) + Σ_{m≥1} s[m-1] sin(mt)`, where `c` are
// the cosine and `s` the sine coefficients.
//
// # Safety
// `cos_coeffs` must point to `ncos` doubles, `sin_coeffs` to `nsin`
// doubles (or be null when `nsin` is 0), and `out` to a handle slot.
enum TbStatus tb_grid_fourier(const double *cos_coeffs,
                              size_t ncos,
                              const double *sin_coeffs,
                              size_t nsin,
                              size_t n,
                              struct TbGrid **out);

// Number of nodes of a grid, or 0 for a null handle.
//
// # Safety
// `grid` must be null or a live grid handle.
size_t tb_grid_len(const struct TbGrid *grid);

// # Safety
// `grid` must be null or a handle from `tb_grid_*`, not yet freed.
void tb_grid_free(struct TbGrid *grid);

// Problem with exterior/interior constants and complex angular frequency;
// the coupling constant defaults to `i/k0`.
//
// # Safety
// `out` must be a valid pointer to a handle slot.
enum TbStatus tb_problem_new(double eps0,
                             double eps1,
                             double omega_re,
                             double omega_im,
                             struct TbProblem **out);

// Set the Burton–Miller coupling constant; its imaginary part must be nonzero.
//
// # Safety
// `problem` must be a live problem handle.
enum TbStatus tb_problem_set_beta(struct TbProblem *problem, double re, double im);

// # Safety
// `problem` must be null or a handle from `tb_problem_new`, not yet freed.
void tb_problem_free(struct TbProblem *problem);

// Dense solve for a plane wave travelling along +x. `order` selects the
// quadrature (1 for the low-order scheme, 31 for the high-order one).
//
// # Safety
// `grid` and `problem` must be live handles; `out` a valid handle slot.
enum TbStatus tb_solve(const struct TbGrid *grid,
                       const struct TbProblem *problem,
                       enum TbFormulation form,
                       size_t order,
                       struct TbSolution **out);

// Fast direct solve (low-order quadrature) for a plane wave along +x.
// The grid size must be `leaf_size · 2^L` with `L ≥ 1`.
//
// # Safety
// `grid` and `problem` must be live handles; `out` a valid handle slot.
enum TbStatus tb_solve_fast(const struct TbGrid *grid,
                            const struct TbProblem *problem,
                            enum TbFormulation form,
                            size_t leaf_size,
                            size_t skeletons,
                            struct TbSolution **out);

// Length of one field of a solution, or 0 for a null handle.
//
// # Safety
// `sol` must be null or a live solution handle.
size_t tb_solution_len(const struct TbSolution *sol, enum TbField field);

// Copy a field into `buf` as `2·len` interleaved doubles; `len` is the
// capacity in complex values.
//
// # Safety
// `sol` must be a live solution handle and `buf` point to `2·len` doubles.
enum TbStatus tb_solution_copy(const struct TbSolution *sol,
                               enum TbField field,
                               double *buf,
                               size_t len);

// # Safety
// `sol` must be null or a handle from `tb_solve*`, not yet freed.
void tb_solution_free(struct TbSolution *sol);

// Relative 2-norm error of `(u, q)` against the circle solution. The grid
// must be a circle and the frequency real.
//
// # Safety
// All handles must be live; `err` must be writable.
enum TbStatus tb_mie_error(const struct TbGrid *grid,
                           const struct TbProblem *problem,
                           const struct TbSolution *sol,
                           double *err);

// Eigenvalues inside the square of side `side` centered at
// `center_re + i center_im`, using the default contour settings. Up to
// `capacity` values are written; `count` receives the number found.
//
// # Safety
// `grid` must be live; `re`, `im` must hold `capacity` doubles; `count` writable.
enum TbStatus tb_eigenvalues(const struct TbGrid *grid,
                             double eps0,
                             double eps1,
                             size_t order,
                             enum TbFormulation form,
                             double center_re,
                             double center_im,
                             double side,
                             double *re,
                             double *im,
                             size_t capacity,
                             size_t *count);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TRANSBIE_H */
