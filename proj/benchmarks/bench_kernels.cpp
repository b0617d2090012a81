// Timing comparison of the serial reference kernels against the OpenMP
// variants, plus a bitwise agreement check on every measured case.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "epd/kernels.hpp"
#include "epd/rng.hpp"

using namespace epd;

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::vector<float> random_vec(int64_t n, Rng& rng) {
  std::vector<float> v(static_cast<size_t>(n));
  for (float& x : v) x = rng.uniform_float(-1.0f, 1.0f);
  return v;
}

template <typename F>
double time_best_of(int reps, F&& f) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    auto t0 = Clock::now();
    f();
    best = std::min(best, ms_since(t0));
  }
  return best;
}

void bench_gemm(int64_t m, int64_t k, int64_t n, Rng& rng) {
  auto A = random_vec(m * k, rng);
  auto B = random_vec(k * n, rng);
  std::vector<float> C1(static_cast<size_t>(m * n)), C2(C1);

  const double ts = time_best_of(
      5, [&] { kernels::serial::gemm_nn(m, k, n, A.data(), B.data(), C1.data()); });
  const double tp = time_best_of(
      5, [&] { kernels::omp::gemm_nn(m, k, n, A.data(), B.data(), C2.data()); });
  const bool same = std::memcmp(C1.data(), C2.data(), C1.size() * sizeof(float)) == 0;
  std::printf("gemm_nn %4lldx%4lldx%4lld  serial %8.3f ms  omp %8.3f ms  speedup %5.2fx  bitwise %s\n",
              static_cast<long long>(m), static_cast<long long>(k),
              static_cast<long long>(n), ts, tp, ts / tp, same ? "ok" : "MISMATCH");
}

void bench_bn(int64_t n, int64_t c, Rng& rng) {
  auto x = random_vec(n * c, rng);
  auto gamma = random_vec(c, rng);
  auto beta = random_vec(c, rng);
  std::vector<float> out1(static_cast<size_t>(n * c)), out2(out1);
  std::vector<float> xhat(static_cast<size_t>(n * c)), mean(static_cast<size_t>(c)),
      var(static_cast<size_t>(c)), rstd(static_cast<size_t>(c));

  const double ts = time_best_of(5, [&] {
    kernels::serial::bn_train_forward(n, c, x.data(), gamma.data(), beta.data(), 1e-5f,
                                      out1.data(), xhat.data(), mean.data(),
                                      var.data(), rstd.data());
  });
  const double tp = time_best_of(5, [&] {
    kernels::omp::bn_train_forward(n, c, x.data(), gamma.data(), beta.data(), 1e-5f,
                                   out2.data(), xhat.data(), mean.data(), var.data(),
                                   rstd.data());
  });
  const bool same =
      std::memcmp(out1.data(), out2.data(), out1.size() * sizeof(float)) == 0;
  std::printf("bn_fwd  %6lldx%4lld       serial %8.3f ms  omp %8.3f ms  speedup %5.2fx  bitwise %s\n",
              static_cast<long long>(n), static_cast<long long>(c), ts, tp, ts / tp,
              same ? "ok" : "MISMATCH");
}

void bench_softmax(int64_t n, int64_t c, Rng& rng) {
  auto z = random_vec(n * c, rng);
  std::vector<float> p1(static_cast<size_t>(n * c)), p2(p1);
  const double ts =
      time_best_of(5, [&] { kernels::serial::softmax_rows(n, c, z.data(), p1.data()); });
  const double tp =
      time_best_of(5, [&] { kernels::omp::softmax_rows(n, c, z.data(), p2.data()); });
  const bool same = std::memcmp(p1.data(), p2.data(), p1.size() * sizeof(float)) == 0;
  std::printf("softmax %6lldx%4lld       serial %8.3f ms  omp %8.3f ms  speedup %5.2fx  bitwise %s\n",
              static_cast<long long>(n), static_cast<long long>(c), ts, tp, ts / tp,
              same ? "ok" : "MISMATCH");
}

}  // namespace

int main() {
#ifdef _OPENMP
  std::printf("OpenMP threads: %d\n", omp_get_max_threads());
#else
  std::printf("built without OpenMP; omp variants run serially\n");
#endif
  Rng rng(42);
  bench_gemm(128, 128, 64, rng);
  bench_gemm(512, 256, 256, rng);
  bench_gemm(1024, 512, 512, rng);
  bench_bn(4096, 64, rng);
  bench_bn(65536, 64, rng);
  bench_softmax(4096, 51, rng);
  bench_softmax(65536, 51, rng);
  return 0;
}
