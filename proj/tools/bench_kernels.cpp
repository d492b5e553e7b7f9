// Compares the serial reference kernels against the OpenMP versions and
// checks they agree bitwise.
#include <chrono>
#include <cstdio>
#include <random>

#include "avatar/kernels.hpp"

using namespace avatar;
using Clock = std::chrono::steady_clock;

namespace {

Tensor random_tensor(int r, int c, std::mt19937_64& rng) {
  Tensor t(r, c);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (double& x : t.d) x = u(rng);
  return t;
}

template <typename F>
double time_ms(F&& fn, int reps) {
  const auto t0 = Clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto t1 = Clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

void bench_size(int n, std::mt19937_64& rng) {
  const Tensor a = random_tensor(n, n, rng);
  const Tensor b = random_tensor(n, n, rng);
  Tensor cs, cp, ds, dp;
  const int reps = n <= 128 ? 50 : 5;
  const double t_serial = time_ms([&] { kern::matmul_serial(cs, a, b); }, reps);
  const double t_omp = time_ms([&] { kern::matmul_omp(cp, a, b); }, reps);
  bool exact = cs.d == cp.d;
  const double t_sq_serial = time_ms([&] { kern::sqdist_serial(ds, a, b); }, reps);
  const double t_sq_omp = time_ms([&] { kern::sqdist_omp(dp, a, b); }, reps);
  exact = exact && ds.d == dp.d;
  std::printf("n=%4d  matmul serial %8.3f ms  omp %8.3f ms  speedup %5.2fx | "
              "sqdist serial %8.3f ms  omp %8.3f ms  speedup %5.2fx | bitwise %s\n",
              n, t_serial, t_omp, t_serial / t_omp, t_sq_serial, t_sq_omp,
              t_sq_serial / t_sq_omp, exact ? "equal" : "DIFFER");
}

}  // namespace

int main() {
  std::mt19937_64 rng(42);
  for (int n : {32, 64, 128, 256, 512}) bench_size(n, rng);
  return 0;
}
