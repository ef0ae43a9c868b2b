#include <chrono>
#include <cmath>
#include <cstdio>
#include <vector>

#include "CLI11.hpp"
#include "vidchap/kernels.hpp"
#include "vidchap/rng.hpp"

namespace {

using vidchap::Rng;
namespace kernels = vidchap::kernels;

double now_s() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

std::vector<double> random_vec(size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.next_normal();
  return v;
}

template <typename Fn>
double time_best_of(int repeats, const Fn& fn) {
  double best = 1e300;
  for (int i = 0; i < repeats; ++i) {
    const double t0 = now_s();
    fn();
    best = std::min(best, now_s() - t0);
  }
  return best;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"serial vs parallel kernel timings"};
  int n = 256, repeats = 5;
  uint64_t seed = 1;
  app.add_option("--size", n, "square matmul dimension (default: 256)");
  app.add_option("--repeats", repeats, "timing repeats, best-of (default: 5)");
  app.add_option("--seed", seed, "input seed");
  CLI11_PARSE(app, argc, argv);

  Rng rng(seed);
  std::printf("threads available: %d\n", kernels::max_threads());

  {
    const auto a = random_vec(static_cast<size_t>(n) * n, rng);
    const auto b = random_vec(static_cast<size_t>(n) * n, rng);
    std::vector<double> c_serial(static_cast<size_t>(n) * n);
    std::vector<double> c_omp(c_serial.size());
    const double ts = time_best_of(repeats, [&] {
      kernels::matmul_serial(a.data(), b.data(), c_serial.data(), n, n, n, false, false);
    });
    const double tp = time_best_of(repeats, [&] {
      kernels::matmul_omp(a.data(), b.data(), c_omp.data(), n, n, n, false, false);
    });
    std::printf("matmul %dx%d:        serial %8.3f ms   parallel %8.3f ms   speedup %.2fx   max|diff| %g\n",
                n, n, ts * 1e3, tp * 1e3, ts / tp, max_abs_diff(c_serial, c_omp));
  }

  {
    const int rows = n * 4, cols = n;
    const auto in = random_vec(static_cast<size_t>(rows) * cols, rng);
    std::vector<double> out_serial(in.size()), out_omp(in.size());
    const double ts = time_best_of(repeats, [&] {
      kernels::softmax_rows_serial(in.data(), out_serial.data(), rows, cols);
    });
    const double tp = time_best_of(repeats, [&] {
      kernels::softmax_rows_omp(in.data(), out_omp.data(), rows, cols);
    });
    std::printf("softmax %dx%d:      serial %8.3f ms   parallel %8.3f ms   speedup %.2fx   max|diff| %g\n",
                rows, cols, ts * 1e3, tp * 1e3, ts / tp, max_abs_diff(out_serial, out_omp));
  }

  {
    const int t_len = n * 16, c_len = n;
    const auto in = random_vec(static_cast<size_t>(t_len) * c_len, rng);
    std::vector<double> out_serial(in.size()), out_omp(in.size());
    const int n_shift = c_len / 8;
    const double ts = time_best_of(repeats, [&] {
      kernels::temporal_shift_serial(in.data(), out_serial.data(), t_len, c_len, n_shift, false);
    });
    const double tp = time_best_of(repeats, [&] {
      kernels::temporal_shift_omp(in.data(), out_omp.data(), t_len, c_len, n_shift, false);
    });
    std::printf("tsm %dx%d:         serial %8.3f ms   parallel %8.3f ms   speedup %.2fx   max|diff| %g\n",
                t_len, c_len, ts * 1e3, tp * 1e3, ts / tp, max_abs_diff(out_serial, out_omp));
  }
  return 0;
}
