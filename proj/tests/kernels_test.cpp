#include <cmath>
#include <cstring>
#include <vector>

#include "doctest.h"
#include "vidchap/kernels.hpp"
#include "vidchap/rng.hpp"

using namespace vidchap;

namespace {

std::vector<double> random_vec(size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.next_normal();
  return v;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

// Plain triple loop against explicit (row, col) indexing, independent of the
// kernel's layout bookkeeping.
std::vector<double> matmul_oracle(const std::vector<double>& a, const std::vector<double>& b,
                                  int n, int k, int m, bool ta, bool tb) {
  std::vector<double> c(static_cast<size_t>(n) * m, 0.0);
  const auto ia = [&](int r, int x) { return ta ? x * n + r : r * k + x; };
  const auto ib = [&](int x, int col) { return tb ? col * k + x : x * m + col; };
  for (int r = 0; r < n; ++r)
    for (int col = 0; col < m; ++col) {
      double s = 0.0;
      for (int x = 0; x < k; ++x)
        s += a[static_cast<size_t>(ia(r, x))] * b[static_cast<size_t>(ib(x, col))];
      c[static_cast<size_t>(r) * m + col] = s;
    }
  return c;
}

}  // namespace

TEST_CASE("matmul matches the oracle and the parallel path is bit-identical") {
  Rng rng(101);
  for (int trial = 0; trial < 60; ++trial) {
    const int n = rng.next_int(1, 17);
    const int k = rng.next_int(1, 17);
    const int m = rng.next_int(1, 17);
    const bool ta = rng.next_int(0, 1) == 1;
    const bool tb = rng.next_int(0, 1) == 1;
    const auto a = random_vec(static_cast<size_t>(n) * k, rng);
    const auto b = random_vec(static_cast<size_t>(k) * m, rng);

    std::vector<double> serial(static_cast<size_t>(n) * m), omp(serial.size());
    kernels::matmul_serial(a.data(), b.data(), serial.data(), n, k, m, ta, tb);
    kernels::matmul_omp(a.data(), b.data(), omp.data(), n, k, m, ta, tb);
    CHECK(bitwise_equal(serial, omp));

    const auto expect = matmul_oracle(a, b, n, k, m, ta, tb);
    for (size_t i = 0; i < expect.size(); ++i)
      CHECK(serial[i] == doctest::Approx(expect[i]).epsilon(1e-12));
  }
}

TEST_CASE("matmul hand example") {
  // [1 2; 3 4] * [5 6; 7 8] = [19 22; 43 50]
  const std::vector<double> a{1, 2, 3, 4}, b{5, 6, 7, 8};
  std::vector<double> c(4);
  kernels::matmul(a.data(), b.data(), c.data(), 2, 2, 2);
  CHECK(c == std::vector<double>{19, 22, 43, 50});
}

TEST_CASE("softmax rows normalize and the two paths agree bitwise") {
  Rng rng(102);
  for (int trial = 0; trial < 40; ++trial) {
    const int rows = rng.next_int(1, 12);
    const int cols = rng.next_int(1, 12);
    auto x = random_vec(static_cast<size_t>(rows) * cols, rng);
    for (double& v : x) v *= 5.0;  // widen the range to stress max-subtraction

    std::vector<double> serial(x.size()), omp(x.size());
    kernels::softmax_rows_serial(x.data(), serial.data(), rows, cols);
    kernels::softmax_rows_omp(x.data(), omp.data(), rows, cols);
    CHECK(bitwise_equal(serial, omp));

    for (int r = 0; r < rows; ++r) {
      double sum = 0.0;
      for (int c = 0; c < cols; ++c) {
        const double p = serial[static_cast<size_t>(r) * cols + c];
        CHECK(p > 0.0);
        CHECK(p < 1.0 + 1e-12);
        sum += p;
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }

    // equal inputs produce the uniform row
    std::vector<double> flat(static_cast<size_t>(cols), 2.5), out(static_cast<size_t>(cols));
    kernels::softmax_rows(flat.data(), out.data(), 1, cols);
    for (double p : out) CHECK(p == doctest::Approx(1.0 / cols).epsilon(1e-12));
  }
}

TEST_CASE("softmax survives extreme logits without overflow") {
  const std::vector<double> x{1000.0, 0.0, -1000.0};
  std::vector<double> out(3);
  kernels::softmax_rows(x.data(), out.data(), 1, 3);
  CHECK(out[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(std::isfinite(out[1]));
  CHECK(std::isfinite(out[2]));
}

TEST_CASE("softmax allows aliased input and output") {
  Rng rng(103);
  auto x = random_vec(12, rng);
  auto copy = x;
  std::vector<double> separate(12);
  kernels::softmax_rows(copy.data(), separate.data(), 3, 4);
  kernels::softmax_rows(x.data(), x.data(), 3, 4);
  CHECK(bitwise_equal(x, separate));
}

TEST_CASE("temporal shift kernel forward and reverse agree across paths") {
  Rng rng(104);
  for (int trial = 0; trial < 40; ++trial) {
    const int t_len = rng.next_int(1, 20);
    const int c_len = rng.next_int(1, 16);
    const int n_shift = rng.next_int(0, c_len / 2);
    const auto x = random_vec(static_cast<size_t>(t_len) * c_len, rng);

    for (bool reverse : {false, true}) {
      std::vector<double> serial(x.size()), omp(x.size());
      kernels::temporal_shift_serial(x.data(), serial.data(), t_len, c_len, n_shift, reverse);
      kernels::temporal_shift_omp(x.data(), omp.data(), t_len, c_len, n_shift, reverse);
      CHECK(bitwise_equal(serial, omp));
    }

    // adjoint identity: <shift(x), w> == <x, shift_reverse(w)>
    const auto w = random_vec(x.size(), rng);
    std::vector<double> fx(x.size()), rw(x.size());
    kernels::temporal_shift(x.data(), fx.data(), t_len, c_len, n_shift, false);
    kernels::temporal_shift(w.data(), rw.data(), t_len, c_len, n_shift, true);
    double lhs = 0.0, rhs = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
      lhs += fx[i] * w[i];
      rhs += x[i] * rw[i];
    }
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
}

TEST_CASE("parallel toggle routes the dispatchers") {
  CHECK(kernels::max_threads() >= 1);
  const bool was = kernels::parallel_enabled();

  Rng rng(105);
  const auto a = random_vec(9, rng);
  const auto b = random_vec(9, rng);
  std::vector<double> on(9), off(9);

  kernels::set_parallel(true);
  CHECK(kernels::parallel_enabled());
  kernels::matmul(a.data(), b.data(), on.data(), 3, 3, 3);
  kernels::set_parallel(false);
  CHECK_FALSE(kernels::parallel_enabled());
  kernels::matmul(a.data(), b.data(), off.data(), 3, 3, 3);
  CHECK(bitwise_equal(on, off));

  kernels::set_parallel(was);
}
