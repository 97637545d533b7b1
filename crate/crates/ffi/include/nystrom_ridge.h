#ifndef NYSTROM_RIDGE_H
#define NYSTROM_RIDGE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum NrStatus {
  NR_STATUS_OK = 0,
  NR_STATUS_NULL_POINTER = 1,
  NR_STATUS_INVALID_ARGUMENT = 2,
  NR_STATUS_DIMENSION_MISMATCH = 3,
  NR_STATUS_NUMERICAL = 4,
  NR_STATUS_PANIC = 5,
} NrStatus;

typedef enum NrKernelFamily {
  NR_KERNEL_FAMILY_LINEAR = 0,
  // `exp(-|x - x'|^2 / (2 h^2))`, parameter `h`.
  NR_KERNEL_FAMILY_RBF = 1,
  // Periodic Bernoulli kernel on [0, 1), parameter is the integer order.
  NR_KERNEL_FAMILY_BERNOULLI = 2,
} NrKernelFamily;

// Points and kernel.
typedef struct NrKernel NrKernel;

// Nyström sketch over the points of an [`NrKernel`].
typedef struct NrSketch NrSketch;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or NULL. The pointer
// stays valid until the next failing call on the same thread.
const char *nr_last_error_message(void);

// Creates a kernel handle from `n` points of dimension `dim` stored row-major.
//
// # Safety
// `data` must point to `n * dim` readable doubles and `out` must be writable.
enum NrStatus nr_kernel_new(const double *data,
                            size_t n,
                            size_t dim,
                            enum NrKernelFamily family,
                            double parameter,
                            struct NrKernel **out);

// # Safety
// `kernel` must be NULL or a handle from [`nr_kernel_new`] not yet freed.
void nr_kernel_free(struct NrKernel *kernel);

// Number of points, or 0 for NULL.
//
// # Safety
// `kernel` must be NULL or a live handle.
size_t nr_kernel_len(const struct NrKernel *kernel);

// Exact λ-ridge leverage scores through a dense eigendecomposition.
//
// # Safety
// `kernel` must be a live handle and `out` must hold `len` writable doubles.
enum NrStatus nr_exact_leverage(const struct NrKernel *kernel,
                                double lambda,
                                double *out,
                                size_t len);

// Effective dimension and maximal degrees of freedom at `lambda`. Either
// output pointer may be NULL.
//
// # Safety
// `kernel` must be a live handle; non-NULL outputs must be writable.
enum NrStatus nr_degrees_of_freedom(const struct NrKernel *kernel,
                                    double lambda,
                                    double *d_eff,
                                    double *d_mof);

// Fast approximate scores from `p` columns drawn with probability
// proportional to the kernel diagonal.
//
// # Safety
// `kernel` must be a live handle and `out` must hold `len` writable doubles.
enum NrStatus nr_approx_leverage(const struct NrKernel *kernel,
                                 double lambda,
                                 size_t p,
                                 uint64_t seed,
                                 double *out,
                                 size_t len);

// Smallest `p ≥ 8(d_eff/β + 1/6)·ln(n/ρ)`.
//
// # Safety
// `out` must be writable.
enum NrStatus nr_sufficient_p(double d_eff, double beta, size_t n, double rho, size_t *out);

// Builds a Nyström sketch from the listed column indices; repeats are
// allowed and ignored.
//
// # Safety
// `kernel` must be a live handle, `indices` must hold `count` readable
// values and `out` must be writable.
enum NrStatus nr_sketch_new(const struct NrKernel *kernel,
                            const size_t *indices,
                            size_t count,
                            struct NrSketch **out);

// # Safety
// `sketch` must be NULL or a handle from [`nr_sketch_new`] not yet freed.
void nr_sketch_free(struct NrSketch *sketch);

// Rank of the sketch factor, or 0 for NULL.
//
// # Safety
// `sketch` must be NULL or a live handle.
size_t nr_sketch_rank(const struct NrSketch *sketch);

// Kernel ridge regression with the sketched kernel; writes fitted values.
//
// # Safety
// `sketch` must be a live handle, `y` must hold `len` readable doubles and
// `fitted` must hold `len` writable doubles.
enum NrStatus nr_sketch_fit(const struct NrSketch *sketch,
                            const double *y,
                            double lambda,
                            double *fitted,
                            size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NYSTROM_RIDGE_H */
