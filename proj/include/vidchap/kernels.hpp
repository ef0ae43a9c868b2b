#pragma once

#include <cstdint>

// Dense numeric kernels behind the autodiff ops and the inference paths.
// Every kernel has a serial reference and an OpenMP variant with the same
// per-element operation order, so the two are bit-identical and the parallel
// path can be validated against the reference (see kernels_test and the
// bench_kernels tool).
namespace vidchap::kernels {

// Runtime switch for the dispatching wrappers. Defaults to on; with OpenMP
// unavailable the wrappers always run the serial reference.
void set_parallel(bool enabled);
bool parallel_enabled();
int max_threads();

// c[n x m] = op(a) * op(b) where op transposes when the flag is set.
// a is stored row-major with shape (ta ? k x n : n x k), b with
// (tb ? m x k : k x m). c must not alias a or b.
void matmul_serial(const double* a, const double* b, double* c, int n, int k,
                   int m, bool ta, bool tb);
void matmul_omp(const double* a, const double* b, double* c, int n, int k,
                int m, bool ta, bool tb);
void matmul(const double* a, const double* b, double* c, int n, int k, int m,
            bool ta = false, bool tb = false);

// Row-wise softmax with max subtraction; in and out may alias.
void softmax_rows_serial(const double* in, double* out, int rows, int cols);
void softmax_rows_omp(const double* in, double* out, int rows, int cols);
void softmax_rows(const double* in, double* out, int rows, int cols);

// Temporal shift over a T x C sequence: the first n_shift channels take their
// value from t-1, the next n_shift from t+1, the rest pass through; vacated
// boundary slots are zero. reverse=true swaps the two shifted groups, which
// is exactly the backward pass of the forward shift.
void temporal_shift_serial(const double* in, double* out, int t_len, int c_len,
                           int n_shift, bool reverse);
void temporal_shift_omp(const double* in, double* out, int t_len, int c_len,
                        int n_shift, bool reverse);
void temporal_shift(const double* in, double* out, int t_len, int c_len,
                    int n_shift, bool reverse = false);

}  // namespace vidchap::kernels
