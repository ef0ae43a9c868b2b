#include "vidchap/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace vidchap::kernels {

namespace {
std::atomic<bool> g_parallel{true};

// Below this many multiply-adds the fork/join overhead dominates.
constexpr int64_t kParallelFlopThreshold = 1 << 15;
}  // namespace

void set_parallel(bool enabled) { g_parallel.store(enabled); }
bool parallel_enabled() { return g_parallel.load(); }

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

// One output row of c. The inner accumulation order over kk is fixed per
// (i, j) element regardless of which variant runs the row, so serial and
// OpenMP results are bitwise identical.
static inline void matmul_row(const double* a, const double* b, double* c,
                              int i, int n, int k, int m, bool ta, bool tb) {
  double* crow = c + static_cast<int64_t>(i) * m;
  std::memset(crow, 0, sizeof(double) * static_cast<size_t>(m));
  if (!ta && !tb) {
    const double* arow = a + static_cast<int64_t>(i) * k;
    for (int kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      const double* brow = b + static_cast<int64_t>(kk) * m;
      for (int j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  } else {
    for (int kk = 0; kk < k; ++kk) {
      const double av = ta ? a[static_cast<int64_t>(kk) * n + i]
                           : a[static_cast<int64_t>(i) * k + kk];
      if (!tb) {
        const double* brow = b + static_cast<int64_t>(kk) * m;
        for (int j = 0; j < m; ++j) crow[j] += av * brow[j];
      } else {
        for (int j = 0; j < m; ++j)
          crow[j] += av * b[static_cast<int64_t>(j) * k + kk];
      }
    }
  }
}

void matmul_serial(const double* a, const double* b, double* c, int n, int k,
                   int m, bool ta, bool tb) {
  for (int i = 0; i < n; ++i) matmul_row(a, b, c, i, n, k, m, ta, tb);
}

void matmul_omp(const double* a, const double* b, double* c, int n, int k,
                int m, bool ta, bool tb) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int i = 0; i < n; ++i) matmul_row(a, b, c, i, n, k, m, ta, tb);
}

void matmul(const double* a, const double* b, double* c, int n, int k, int m,
            bool ta, bool tb) {
  const int64_t flops = static_cast<int64_t>(n) * k * m;
  if (parallel_enabled() && flops >= kParallelFlopThreshold) {
    matmul_omp(a, b, c, n, k, m, ta, tb);
  } else {
    matmul_serial(a, b, c, n, k, m, ta, tb);
  }
}

static inline void softmax_row(const double* in, double* out, int i, int cols) {
  const double* x = in + static_cast<int64_t>(i) * cols;
  double* y = out + static_cast<int64_t>(i) * cols;
  double mx = x[0];
  for (int j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
  double sum = 0.0;
  for (int j = 0; j < cols; ++j) {
    y[j] = std::exp(x[j] - mx);
    sum += y[j];
  }
  const double inv = 1.0 / sum;
  for (int j = 0; j < cols; ++j) y[j] *= inv;
}

void softmax_rows_serial(const double* in, double* out, int rows, int cols) {
  for (int i = 0; i < rows; ++i) softmax_row(in, out, i, cols);
}

void softmax_rows_omp(const double* in, double* out, int rows, int cols) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int i = 0; i < rows; ++i) softmax_row(in, out, i, cols);
}

void softmax_rows(const double* in, double* out, int rows, int cols) {
  if (parallel_enabled() && static_cast<int64_t>(rows) * cols >= 4096) {
    softmax_rows_omp(in, out, rows, cols);
  } else {
    softmax_rows_serial(in, out, rows, cols);
  }
}

static inline void shift_row(const double* in, double* out, int t, int t_len,
                             int c_len, int n_shift, bool reverse) {
  double* y = out + static_cast<int64_t>(t) * c_len;
  // group A takes from t-1, group B from t+1; reverse swaps the groups.
  const int a_src = reverse ? t + 1 : t - 1;
  const int b_src = reverse ? t - 1 : t + 1;
  for (int c = 0; c < n_shift; ++c)
    y[c] = (a_src >= 0 && a_src < t_len)
               ? in[static_cast<int64_t>(a_src) * c_len + c]
               : 0.0;
  for (int c = n_shift; c < 2 * n_shift; ++c)
    y[c] = (b_src >= 0 && b_src < t_len)
               ? in[static_cast<int64_t>(b_src) * c_len + c]
               : 0.0;
  const double* x = in + static_cast<int64_t>(t) * c_len;
  for (int c = 2 * n_shift; c < c_len; ++c) y[c] = x[c];
}

void temporal_shift_serial(const double* in, double* out, int t_len, int c_len,
                           int n_shift, bool reverse) {
  for (int t = 0; t < t_len; ++t)
    shift_row(in, out, t, t_len, c_len, n_shift, reverse);
}

void temporal_shift_omp(const double* in, double* out, int t_len, int c_len,
                        int n_shift, bool reverse) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int t = 0; t < t_len; ++t)
    shift_row(in, out, t, t_len, c_len, n_shift, reverse);
}

void temporal_shift(const double* in, double* out, int t_len, int c_len,
                    int n_shift, bool reverse) {
  if (parallel_enabled() && static_cast<int64_t>(t_len) * c_len >= 16384) {
    temporal_shift_omp(in, out, t_len, c_len, n_shift, reverse);
  } else {
    temporal_shift_serial(in, out, t_len, c_len, n_shift, reverse);
  }
}

}  // namespace vidchap::kernels
