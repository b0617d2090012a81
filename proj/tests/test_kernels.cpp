// The serial kernels are the reference; the omp variants must agree bitwise
// for any input, since parallelism never splits a floating-point reduction.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <vector>

#include "epd/kernels.hpp"
#include "epd/rng.hpp"

using namespace epd;

namespace {

std::vector<float> random_vec(int64_t n, Rng& rng, float lo = -1.0f, float hi = 1.0f) {
  std::vector<float> v(static_cast<size_t>(n));
  for (float& x : v) x = rng.uniform_float(lo, hi);
  return v;
}

}  // namespace

TEST_CASE("gemm variants: serial and omp agree bitwise") {
  Rng rng(1);
  for (int rep = 0; rep < 30; ++rep) {
    const int64_t m = rng.uniform_int(1, 80), k = rng.uniform_int(1, 80),
                  n = rng.uniform_int(1, 80);
    auto A = random_vec(m * k, rng);
    auto B = random_vec(k * n, rng);
    auto Bt = random_vec(n * k, rng);
    auto G = random_vec(m * n, rng);

    std::vector<float> c1(static_cast<size_t>(m * n)), c2(c1);
    kernels::serial::gemm_nn(m, k, n, A.data(), B.data(), c1.data());
    kernels::omp::gemm_nn(m, k, n, A.data(), B.data(), c2.data());
    CHECK(c1 == c2);

    kernels::serial::gemm_nt(m, k, n, A.data(), Bt.data(), c1.data());
    kernels::omp::gemm_nt(m, k, n, A.data(), Bt.data(), c2.data());
    CHECK(c1 == c2);

    std::vector<float> d1(static_cast<size_t>(k * n)), d2(d1);
    kernels::serial::gemm_tn(m, k, n, A.data(), G.data(), d1.data());
    kernels::omp::gemm_tn(m, k, n, A.data(), G.data(), d2.data());
    CHECK(d1 == d2);
  }
}

TEST_CASE("gemm_nn matches a double-precision loop within tolerance") {
  Rng rng(2);
  const int64_t m = 17, k = 23, n = 11;
  auto A = random_vec(m * k, rng);
  auto B = random_vec(k * n, rng);
  std::vector<float> C(static_cast<size_t>(m * n));
  kernels::gemm_nn(m, k, n, A.data(), B.data(), C.data());
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int64_t p = 0; p < k; ++p)
        acc += static_cast<double>(A[(size_t)(i * k + p)]) *
               static_cast<double>(B[(size_t)(p * n + j)]);
      CHECK(C[(size_t)(i * n + j)] == doctest::Approx(acc).epsilon(1e-5));
    }
}

TEST_CASE("batchnorm kernels: serial and omp agree bitwise") {
  Rng rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    const int64_t n = rng.uniform_int(1, 200), c = rng.uniform_int(1, 80);
    auto x = random_vec(n * c, rng);
    auto gamma = random_vec(c, rng, 0.5f, 1.5f);
    auto beta = random_vec(c, rng);
    auto gy = random_vec(n * c, rng);

    std::vector<float> out1((size_t)(n * c)), out2 = out1, xh1 = out1, xh2 = out1;
    std::vector<float> mean1((size_t)c), var1 = mean1, rstd1 = mean1;
    std::vector<float> mean2 = mean1, var2 = mean1, rstd2 = mean1;
    kernels::serial::bn_train_forward(n, c, x.data(), gamma.data(), beta.data(),
                                      1e-5f, out1.data(), xh1.data(), mean1.data(),
                                      var1.data(), rstd1.data());
    kernels::omp::bn_train_forward(n, c, x.data(), gamma.data(), beta.data(), 1e-5f,
                                   out2.data(), xh2.data(), mean2.data(), var2.data(),
                                   rstd2.data());
    CHECK(out1 == out2);
    CHECK(xh1 == xh2);
    CHECK(rstd1 == rstd2);

    std::vector<float> dx1((size_t)(n * c), 0.0f), dx2 = dx1;
    std::vector<float> dg1((size_t)c, 0.0f), dg2 = dg1, db1 = dg1, db2 = dg1;
    kernels::serial::bn_train_backward(n, c, gy.data(), gamma.data(), xh1.data(),
                                       rstd1.data(), dx1.data(), dg1.data(), db1.data());
    kernels::omp::bn_train_backward(n, c, gy.data(), gamma.data(), xh2.data(),
                                    rstd2.data(), dx2.data(), dg2.data(), db2.data());
    CHECK(dx1 == dx2);
    CHECK(dg1 == dg2);
    CHECK(db1 == db2);
  }
}

TEST_CASE("softmax and elementwise kernels: serial and omp agree bitwise") {
  Rng rng(4);
  for (int rep = 0; rep < 20; ++rep) {
    const int64_t n = rng.uniform_int(1, 300), c = rng.uniform_int(2, 60);
    auto z = random_vec(n * c, rng, -3.0f, 3.0f);
    std::vector<int64_t> targets;
    for (int64_t i = 0; i < n; ++i) targets.push_back(rng.uniform_int(0, c - 1));

    std::vector<float> p1((size_t)(n * c)), p2 = p1;
    float l1 = 0, l2 = 0;
    kernels::serial::softmax_xent_forward(n, c, z.data(), targets.data(), p1.data(), &l1);
    kernels::omp::softmax_xent_forward(n, c, z.data(), targets.data(), p2.data(), &l2);
    CHECK(p1 == p2);
    CHECK(l1 == l2);

    std::vector<float> dz1((size_t)(n * c), 0.0f), dz2 = dz1;
    kernels::serial::softmax_xent_backward(n, c, p1.data(), targets.data(), 1.0f, dz1.data());
    kernels::omp::softmax_xent_backward(n, c, p2.data(), targets.data(), 1.0f, dz2.data());
    CHECK(dz1 == dz2);

    auto a = random_vec(n, rng);
    auto b = random_vec(n, rng);
    std::vector<float> h1((size_t)n), h2 = h1;
    kernels::serial::hadamard(n, a.data(), b.data(), h1.data());
    kernels::omp::hadamard(n, a.data(), b.data(), h2.data());
    CHECK(h1 == h2);

    std::vector<float> r1((size_t)n), r2 = r1;
    kernels::serial::relu(n, a.data(), r1.data());
    kernels::omp::relu(n, a.data(), r2.data());
    CHECK(r1 == r2);
  }
}

TEST_CASE("dispatch toggle routes both ways with identical results") {
  Rng rng(5);
  const int64_t m = 64, k = 64, n = 64;
  auto A = random_vec(m * k, rng);
  auto B = random_vec(k * n, rng);
  std::vector<float> c1((size_t)(m * n)), c2 = c1;

  kernels::set_parallel(false);
  CHECK_FALSE(kernels::parallel_enabled());
  kernels::gemm_nn(m, k, n, A.data(), B.data(), c1.data());
  kernels::set_parallel(true);
  CHECK(kernels::parallel_enabled());
  kernels::gemm_nn(m, k, n, A.data(), B.data(), c2.data());
  CHECK(c1 == c2);
}
