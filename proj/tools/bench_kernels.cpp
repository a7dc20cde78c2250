// Times the OpenMP kernels against their serial references and reports the
// speedup. Also doubles as a quick throughput probe when sizing models.

#include <chrono>
#include <tuple>
#include <cstdio>
#include <vector>

#include "pfvc/core/kernels.hpp"
#include "pfvc/core/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#else
static int omp_get_max_threads() { return 1; }
#endif

using namespace pfvc;
using namespace pfvc::core;

namespace {

double now_s() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

template <typename F>
double time_best_of(int reps, F&& f) {
  double best = 1e30;
  for (int r = 0; r < reps; ++r) {
    double t0 = now_s();
    f();
    best = std::min(best, now_s() - t0);
  }
  return best;
}

std::vector<real> random_vec(size_t n, Rng& rng) {
  std::vector<real> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

}  // namespace

int main() {
  Rng rng(7);
  std::printf("threads: %d\n", omp_get_max_threads());
  std::printf("%-28s %12s %12s %9s %10s\n", "kernel", "serial_ms", "omp_ms",
              "speedup", "gflops");

  for (int n : {64, 128, 256, 512}) {
    auto a = random_vec(static_cast<size_t>(n) * n, rng);
    auto b = random_vec(static_cast<size_t>(n) * n, rng);
    std::vector<real> c(static_cast<size_t>(n) * n), c2(c.size());
    double ts = time_best_of(3, [&] {
      kernels::matmul_serial(a.data(), b.data(), c.data(), n, n, n);
    });
    double tp = time_best_of(3, [&] {
      kernels::matmul(a.data(), b.data(), c2.data(), n, n, n);
    });
    if (c != c2) {
      std::printf("matmul %d: OMP/serial mismatch!\n", n);
      return 1;
    }
    double flops = 2.0 * n * n * n;
    std::printf("%-28s %12.3f %12.3f %8.2fx %10.2f\n",
                ("matmul " + std::to_string(n) + "^3").c_str(), ts * 1e3, tp * 1e3,
                ts / tp, flops / tp * 1e-9);
  }

  const std::tuple<int, int, int, int> conv_cases[] = {{512, 128, 128, 5},
                                                       {256, 256, 256, 5}};
  for (auto [t, ci, co, k] : conv_cases) {
    auto x = random_vec(static_cast<size_t>(t) * ci, rng);
    auto w = random_vec(static_cast<size_t>(k) * ci * co, rng);
    std::vector<real> bias = random_vec(co, rng);
    int to = kernels::conv1d_out_len(t, k, 1, k / 2, 1);
    std::vector<real> y(static_cast<size_t>(to) * co), y2(y.size());
    double ts = time_best_of(3, [&] {
      kernels::conv1d_serial(x.data(), w.data(), bias.data(), y.data(), t, ci, co, k, 1, k / 2, 1);
    });
    double tp = time_best_of(3, [&] {
      kernels::conv1d(x.data(), w.data(), bias.data(), y2.data(), t, ci, co, k, 1, k / 2, 1);
    });
    if (y != y2) {
      std::printf("conv1d: OMP/serial mismatch!\n");
      return 1;
    }
    double flops = 2.0 * to * co * ci * k;
    char label[64];
    std::snprintf(label, sizeof label, "conv1d t=%d %dx%d k=%d", t, ci, co, k);
    std::printf("%-28s %12.3f %12.3f %8.2fx %10.2f\n", label, ts * 1e3, tp * 1e3,
                ts / tp, flops / tp * 1e-9);
  }
  return 0;
}
