#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "epd/autograd.hpp"
#include "epd/rng.hpp"
#include "oracles.hpp"

using namespace epd;
using oracle::dvec;

namespace {

constexpr double kFdTol = 1e-4;

NumArray random_array(std::vector<int64_t> shape, Rng& rng, float lo = -1.0f,
                      float hi = 1.0f) {
  NumArray a = NumArray::zeros(std::move(shape));
  for (float& x : a.data) x = rng.uniform_float(lo, hi);
  return a;
}

// Values bounded away from zero so ReLU finite differences never straddle the
// kink.
NumArray random_array_away_from_zero(std::vector<int64_t> shape, Rng& rng,
                                     float margin = 0.05f) {
  NumArray a = NumArray::zeros(std::move(shape));
  for (float& x : a.data) {
    float v;
    do {
      v = rng.uniform_float(-1.0f, 1.0f);
    } while (std::fabs(v) < margin);
    x = v;
  }
  return a;
}

}  // namespace

TEST_CASE("affine: identity weights pass input through") {
  Graph g;
  NumArray w = NumArray::zeros({3, 3});
  for (int i = 0; i < 3; ++i) w.at(i, i) = 1.0f;
  Rng rng(1);
  NumArray x = random_array({4, 3}, rng);
  const int out = g.affine(g.leaf(x), g.leaf(w), g.leaf(NumArray::zeros({3})));
  CHECK(g.value(out).data == x.data);
}

TEST_CASE("affine: zero input yields the bias on every row") {
  Graph g;
  Rng rng(2);
  NumArray b = random_array({5}, rng);
  const int out =
      g.affine(g.leaf(NumArray::zeros({3, 2})), g.leaf(random_array({2, 5}, rng)),
               g.leaf(b));
  for (int64_t i = 0; i < 3; ++i)
    for (int64_t j = 0; j < 5; ++j) CHECK(g.value(out).at(i, j) == b.data[(size_t)j]);
}

TEST_CASE("affine: frozen 2x3 * 3x2 case") {
  Graph g;
  const int x = g.leaf(NumArray::from({2, 3}, {1, 2, 3, 4, 5, 6}));
  const int w = g.leaf(NumArray::from({3, 2}, {1, 4, 2, 5, 3, 6}));
  const int b = g.leaf(NumArray::from({2}, {0.5f, -1.0f}));
  const int out = g.affine(x, w, b);
  // Hand-computed with the scalar-loop oracle.
  CHECK(g.value(out).data == std::vector<float>{14.5f, 31.0f, 32.5f, 76.0f});
}

TEST_CASE("affine: shape mismatch raises DimensionError") {
  Graph g;
  Rng rng(3);
  const int x = g.leaf(random_array({2, 3}, rng));
  const int w = g.leaf(random_array({4, 2}, rng));
  const int b = g.leaf(NumArray::zeros({2}));
  CHECK_THROWS_AS(g.affine(x, w, b), DimensionError);
}

TEST_CASE("affine: finite-difference gradients on 100+ random cases") {
  Rng rng(100);
  for (int rep = 0; rep < 110; ++rep) {
    const int64_t n = rng.uniform_int(1, 5), k = rng.uniform_int(1, 5),
                  m = rng.uniform_int(1, 5);
    NumArray x = random_array({n, k}, rng);
    NumArray w = random_array({k, m}, rng);
    NumArray b = random_array({m}, rng);
    NumArray proj = random_array({n, m}, rng);

    Graph g;
    const int xi = g.leaf(x), wi = g.leaf(w), bi = g.leaf(b);
    const int out = g.affine(xi, wi, bi);
    const int root = g.reduce_dot(out, proj);
    g.backward(root);

    std::vector<dvec> inputs = {oracle::to_d(x), oracle::to_d(w), oracle::to_d(b)};
    const dvec pr = oracle::to_d(proj);
    auto f = [&](const std::vector<dvec>& in) {
      return oracle::dot(oracle::affine(in[0], in[1], in[2], n, k, m), pr);
    };
    CHECK(oracle::normwise_rel_err(g.grad(xi), oracle::fd_gradient(f, inputs, 0)) < kFdTol);
    CHECK(oracle::normwise_rel_err(g.grad(wi), oracle::fd_gradient(f, inputs, 1)) < kFdTol);
    CHECK(oracle::normwise_rel_err(g.grad(bi), oracle::fd_gradient(f, inputs, 2)) < kFdTol);
  }
}

TEST_CASE("concat: single input is the identity") {
  Graph g;
  Rng rng(4);
  NumArray a = random_array({3, 4}, rng);
  const int out = g.concat({g.leaf(a)});
  CHECK(g.value(out).data == a.data);
}

TEST_CASE("concat: feature dims add and blocks stay in order") {
  Graph g;
  Rng rng(5);
  NumArray a = random_array({3, 2}, rng);
  NumArray b = random_array({3, 3}, rng);
  const int out = g.concat({g.leaf(a), g.leaf(b)});
  REQUIRE(g.value(out).shape == std::vector<int64_t>{3, 5});
  for (int64_t i = 0; i < 3; ++i) {
    for (int64_t j = 0; j < 2; ++j) CHECK(g.value(out).at(i, j) == a.at(i, j));
    for (int64_t j = 0; j < 3; ++j) CHECK(g.value(out).at(i, 2 + j) == b.at(i, j));
  }
}

TEST_CASE("concat: empty list and mismatched leading dims rejected") {
  Graph g;
  Rng rng(6);
  CHECK_THROWS_AS(g.concat({}), DimensionError);
  const int a = g.leaf(random_array({3, 2}, rng));
  const int b = g.leaf(random_array({4, 2}, rng));
  CHECK_THROWS_AS(g.concat({a, b}), DimensionError);
}

TEST_CASE("concat: gradient of sum w.r.t. first input is all ones") {
  Graph g;
  Rng rng(7);
  NumArray a = random_array({3, 2}, rng);
  NumArray b = random_array({3, 3}, rng);
  const int ai = g.leaf(a), bi = g.leaf(b);
  const int out = g.concat({ai, bi});
  const int root = g.reduce_dot(out, NumArray::full({3, 5}, 1.0f));
  g.backward(root);
  for (float v : g.grad(ai).data) CHECK(v == 1.0f);
  for (float v : g.grad(bi).data) CHECK(v == 1.0f);
}

TEST_CASE("concat: finite differences across 100+ cases") {
  Rng rng(101);
  for (int rep = 0; rep < 105; ++rep) {
    const int64_t n = rng.uniform_int(1, 4);
    const int64_t c1 = rng.uniform_int(1, 4), c2 = rng.uniform_int(1, 4);
    NumArray a = random_array({n, c1}, rng);
    NumArray b = random_array({n, c2}, rng);
    NumArray proj = random_array({n, c1 + c2}, rng);

    Graph g;
    const int ai = g.leaf(a), bi = g.leaf(b);
    const int root = g.reduce_dot(g.concat({ai, bi}), proj);
    g.backward(root);

    std::vector<dvec> inputs = {oracle::to_d(a), oracle::to_d(b)};
    const dvec pr = oracle::to_d(proj);
    auto f = [&](const std::vector<dvec>& in) {
      dvec cat(static_cast<size_t>(n * (c1 + c2)));
      for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j < c1; ++j)
          cat[(size_t)(i * (c1 + c2) + j)] = in[0][(size_t)(i * c1 + j)];
        for (int64_t j = 0; j < c2; ++j)
          cat[(size_t)(i * (c1 + c2) + c1 + j)] = in[1][(size_t)(i * c2 + j)];
      }
      return oracle::dot(cat, pr);
    };
    CHECK(oracle::normwise_rel_err(g.grad(ai), oracle::fd_gradient(f, inputs, 0)) < kFdTol);
    CHECK(oracle::normwise_rel_err(g.grad(bi), oracle::fd_gradient(f, inputs, 1)) < kFdTol);
  }
}

TEST_CASE("hadamard: ones is identity, zeros annihilate") {
  Graph g;
  Rng rng(8);
  NumArray x = random_array({4, 4}, rng);
  const int id = g.hadamard(g.leaf(x), g.leaf(NumArray::full({4, 4}, 1.0f)));
  CHECK(g.value(id).data == x.data);
  const int zero = g.hadamard(g.leaf(NumArray::zeros({4, 4})), g.leaf(x));
  for (float v : g.value(zero).data) CHECK(v == 0.0f);
}

TEST_CASE("hadamard: random case matches the elementwise loop oracle") {
  Graph g;
  Rng rng(9);
  NumArray x = random_array({4, 4}, rng);
  NumArray y = random_array({4, 4}, rng);
  const int out = g.hadamard(g.leaf(x), g.leaf(y));
  const dvec ref = oracle::hadamard(oracle::to_d(x), oracle::to_d(y));
  for (size_t i = 0; i < ref.size(); ++i)
    CHECK(g.value(out).data[i] == doctest::Approx(ref[i]).epsilon(1e-6));
  CHECK_THROWS_AS(g.hadamard(g.leaf(x), g.leaf(NumArray::zeros({2, 2}))),
                  DimensionError);
}

TEST_CASE("hadamard: finite differences across 100+ cases") {
  Rng rng(102);
  for (int rep = 0; rep < 105; ++rep) {
    const int64_t n = rng.uniform_int(1, 5), c = rng.uniform_int(1, 5);
    NumArray x = random_array({n, c}, rng);
    NumArray y = random_array({n, c}, rng);
    NumArray proj = random_array({n, c}, rng);

    Graph g;
    const int xi = g.leaf(x), yi = g.leaf(y);
    const int root = g.reduce_dot(g.hadamard(xi, yi), proj);
    g.backward(root);

    std::vector<dvec> inputs = {oracle::to_d(x), oracle::to_d(y)};
    const dvec pr = oracle::to_d(proj);
    auto f = [&](const std::vector<dvec>& in) {
      return oracle::dot(oracle::hadamard(in[0], in[1]), pr);
    };
    CHECK(oracle::normwise_rel_err(g.grad(xi), oracle::fd_gradient(f, inputs, 0)) < kFdTol);
    CHECK(oracle::normwise_rel_err(g.grad(yi), oracle::fd_gradient(f, inputs, 1)) < kFdTol);
  }
}

TEST_CASE("batchnorm: constant batch collapses to beta") {
  Graph g;
  Rng rng(10);
  BatchNormState state = BatchNormState::init(3);
  state.beta = random_array({3}, rng);
  state.gamma = random_array({3}, rng);
  NumArray x = NumArray::zeros({4, 3});
  for (int64_t i = 0; i < 4; ++i)
    for (int64_t j = 0; j < 3; ++j) x.at(i, j) = 7.5f;  // zero variance columns
  const int gi = g.leaf(state.gamma), bi = g.leaf(state.beta);
  const int out = g.batchnorm(g.leaf(x), gi, bi, state, BnMode::train);
  for (int64_t i = 0; i < 4; ++i)
    for (int64_t j = 0; j < 3; ++j)
      CHECK(g.value(out).at(i, j) == doctest::Approx(state.beta.data[(size_t)j]).epsilon(1e-6));
}

TEST_CASE("batchnorm: unit gamma zero beta standardizes columns") {
  Graph g;
  Rng rng(11);
  BatchNormState state = BatchNormState::init(4);
  NumArray x = random_array({64, 4}, rng, -20.0f, 20.0f);  // large variance
  const int gi = g.leaf(state.gamma), bi = g.leaf(state.beta);
  const int out = g.batchnorm(g.leaf(x), gi, bi, state, BnMode::train);
  for (int64_t j = 0; j < 4; ++j) {
    double mean = 0.0;
    for (int64_t i = 0; i < 64; ++i) mean += g.value(out).at(i, j);
    mean /= 64.0;
    double var = 0.0;
    for (int64_t i = 0; i < 64; ++i) {
      const double d = g.value(out).at(i, j) - mean;
      var += d * d;
    }
    var /= 64.0;
    CHECK(std::fabs(mean) < 1e-5);
    CHECK(std::fabs(var - 1.0) < 1e-5);
  }
}

TEST_CASE("batchnorm: running stats update in train mode only") {
  Rng rng(12);
  BatchNormState state = BatchNormState::init(3);
  NumArray x = random_array({8, 3}, rng);
  {
    Graph g;
    g.batchnorm(g.leaf(x), g.leaf(state.gamma), g.leaf(state.beta), state,
                BnMode::eval);
    for (float v : state.running_mean.data) CHECK(v == 0.0f);
    for (float v : state.running_var.data) CHECK(v == 1.0f);
  }
  {
    Graph g;
    g.batchnorm(g.leaf(x), g.leaf(state.gamma), g.leaf(state.beta), state,
                BnMode::train);
    bool moved = false;
    for (float v : state.running_mean.data) moved |= (v != 0.0f);
    CHECK(moved);
  }
}

TEST_CASE("batchnorm: channel mismatch rejected") {
  Graph g;
  Rng rng(13);
  BatchNormState state = BatchNormState::init(3);
  NumArray x = random_array({4, 5}, rng);
  CHECK_THROWS_AS(
      g.batchnorm(g.leaf(x), g.leaf(state.gamma), g.leaf(state.beta), state,
                  BnMode::train),
      DimensionError);
}

TEST_CASE("batchnorm: train-mode finite differences across 100+ cases") {
  Rng rng(103);
  for (int rep = 0; rep < 105; ++rep) {
    const int64_t n = rng.uniform_int(4, 8), c = rng.uniform_int(1, 5);
    // Keep per-channel variance bounded away from zero: near-constant columns
    // make the normalizer's curvature swamp the finite-difference step.
    NumArray x;
    for (;;) {
      x = random_array({n, c}, rng, -2.0f, 2.0f);
      bool ok = true;
      for (int64_t ch = 0; ch < c && ok; ++ch) {
        double mu = 0.0, var = 0.0;
        for (int64_t i = 0; i < n; ++i) mu += x.at(i, ch);
        mu /= static_cast<double>(n);
        for (int64_t i = 0; i < n; ++i) {
          const double d = x.at(i, ch) - mu;
          var += d * d;
        }
        if (var / static_cast<double>(n) < 0.2) ok = false;
      }
      if (ok) break;
    }
    NumArray gamma = random_array({c}, rng, 0.5f, 1.5f);
    NumArray beta = random_array({c}, rng);
    NumArray proj = random_array({n, c}, rng);
    BatchNormState state = BatchNormState::init(c);
    state.gamma = gamma;
    state.beta = beta;

    Graph g;
    const int xi = g.leaf(x), gi = g.leaf(gamma), bi = g.leaf(beta);
    const int out = g.batchnorm(xi, gi, bi, state, BnMode::train);
    const int root = g.reduce_dot(out, proj);
    g.backward(root);

    std::vector<dvec> inputs = {oracle::to_d(x), oracle::to_d(gamma), oracle::to_d(beta)};
    const dvec pr = oracle::to_d(proj);
    const double eps = static_cast<double>(state.epsilon);
    auto f = [&](const std::vector<dvec>& in) {
      return oracle::dot(oracle::bn_train(in[0], in[1], in[2], n, c, eps), pr);
    };
    CHECK(oracle::normwise_rel_err(g.grad(xi), oracle::fd_gradient(f, inputs, 0)) < kFdTol);
    CHECK(oracle::normwise_rel_err(g.grad(gi), oracle::fd_gradient(f, inputs, 1)) < kFdTol);
    CHECK(oracle::normwise_rel_err(g.grad(bi), oracle::fd_gradient(f, inputs, 2)) < kFdTol);
  }
}

TEST_CASE("softmax_xent: uniform logits give ln C") {
  Graph g;
  const int z = g.leaf(NumArray::zeros({3, 7}));
  const int loss = g.softmax_xent(z, {0, 3, 6});
  CHECK(g.value(loss).item() == doctest::Approx(std::log(7.0)).epsilon(1e-6));
}

TEST_CASE("softmax_xent: loss decreases monotonically as the target logit grows") {
  double prev = 1e300;
  for (float boost : {0.0f, 1.0f, 2.0f, 4.0f, 8.0f, 16.0f}) {
    Graph g;
    NumArray z = NumArray::zeros({1, 5});
    z.at(0, 2) = boost;
    const int loss = g.softmax_xent(g.leaf(z), {2});
    CHECK(g.value(loss).item() < prev);
    prev = g.value(loss).item();
  }
  CHECK(prev < 1e-6);  // approaches zero in the dominant-logit limit
}

TEST_CASE("softmax_xent: target out of range rejected") {
  Graph g;
  const int z = g.leaf(NumArray::zeros({2, 3}));
  CHECK_THROWS_AS(g.softmax_xent(z, {0, 3}), DimensionError);
}

TEST_CASE("softmax_xent: finite differences across 100+ cases") {
  Rng rng(104);
  for (int rep = 0; rep < 110; ++rep) {
    const int64_t n = rng.uniform_int(1, 6), c = rng.uniform_int(2, 7);
    NumArray z = random_array({n, c}, rng, -2.0f, 2.0f);
    std::vector<int64_t> targets;
    for (int64_t i = 0; i < n; ++i) targets.push_back(rng.uniform_int(0, c - 1));

    Graph g;
    const int zi = g.leaf(z);
    const int loss = g.softmax_xent(zi, targets);
    g.backward(loss);

    std::vector<dvec> inputs = {oracle::to_d(z)};
    auto f = [&](const std::vector<dvec>& in) {
      return oracle::softmax_xent(in[0], targets, n, c);
    };
    CHECK(oracle::normwise_rel_err(g.grad(zi), oracle::fd_gradient(f, inputs, 0)) < kFdTol);
  }
}

TEST_CASE("softmax_xent gradient matches (softmax - onehot)/n analytically") {
  Graph g;
  Rng rng(14);
  NumArray z = random_array({3, 5}, rng);
  const std::vector<int64_t> targets = {1, 0, 4};
  const int zi = g.leaf(z);
  g.backward(g.softmax_xent(zi, targets));

  dvec zd = oracle::to_d(z);
  for (int64_t i = 0; i < 3; ++i) {
    double mx = zd[(size_t)(i * 5)];
    for (int64_t j = 1; j < 5; ++j) mx = std::max(mx, zd[(size_t)(i * 5 + j)]);
    double denom = 0.0;
    for (int64_t j = 0; j < 5; ++j) denom += std::exp(zd[(size_t)(i * 5 + j)] - mx);
    for (int64_t j = 0; j < 5; ++j) {
      double expect = std::exp(zd[(size_t)(i * 5 + j)] - mx) / denom;
      if (j == targets[(size_t)i]) expect -= 1.0;
      expect /= 3.0;
      CHECK(g.grad(zi).at(i, j) == doctest::Approx(expect).epsilon(1e-4));
    }
  }
}

TEST_CASE("gather: single id returns the row") {
  Graph g;
  Rng rng(15);
  NumArray table = random_array({6, 3}, rng);
  const int out = g.gather(g.leaf(table), {0});
  for (int64_t j = 0; j < 3; ++j) CHECK(g.value(out).at(0, j) == table.at(0, j));
  CHECK_THROWS_AS(g.gather(g.leaf(table), {6}), DimensionError);
}

TEST_CASE("gather: repeated id accumulates gradient (factor 2 for a sum loss)") {
  Graph g;
  Rng rng(16);
  NumArray table = random_array({4, 3}, rng);
  const int ti = g.leaf(table);
  const int out = g.gather(ti, {2, 2});
  g.backward(g.reduce_dot(out, NumArray::full({2, 3}, 1.0f)));
  for (int64_t j = 0; j < 3; ++j) {
    CHECK(g.grad(ti).at(2, j) == 2.0f);
    CHECK(g.grad(ti).at(0, j) == 0.0f);
  }
}

TEST_CASE("gather: random lookups match the loop oracle and pass FD") {
  Rng rng(105);
  for (int rep = 0; rep < 105; ++rep) {
    const int64_t v = rng.uniform_int(2, 6), d = rng.uniform_int(1, 5);
    const int64_t n = rng.uniform_int(1, 6);
    NumArray table = random_array({v, d}, rng);
    std::vector<int64_t> ids;
    for (int64_t i = 0; i < n; ++i) ids.push_back(rng.uniform_int(0, v - 1));
    NumArray proj = random_array({n, d}, rng);

    Graph g;
    const int ti = g.leaf(table);
    const int out = g.gather(ti, ids);
    const dvec ref = oracle::gather(oracle::to_d(table), ids, d);
    for (size_t i = 0; i < ref.size(); ++i)
      CHECK(g.value(out).data[i] == static_cast<float>(ref[i]));
    g.backward(g.reduce_dot(out, proj));

    std::vector<dvec> inputs = {oracle::to_d(table)};
    const dvec pr = oracle::to_d(proj);
    auto f = [&](const std::vector<dvec>& in) {
      return oracle::dot(oracle::gather(in[0], ids, d), pr);
    };
    CHECK(oracle::normwise_rel_err(g.grad(ti), oracle::fd_gradient(f, inputs, 0)) < kFdTol);
  }
}

TEST_CASE("relu: finite differences away from the kink") {
  Rng rng(106);
  for (int rep = 0; rep < 105; ++rep) {
    const int64_t n = rng.uniform_int(1, 5), c = rng.uniform_int(1, 5);
    NumArray x = random_array_away_from_zero({n, c}, rng);
    NumArray proj = random_array({n, c}, rng);

    Graph g;
    const int xi = g.leaf(x);
    g.backward(g.reduce_dot(g.relu(xi), proj));

    std::vector<dvec> inputs = {oracle::to_d(x)};
    const dvec pr = oracle::to_d(proj);
    auto f = [&](const std::vector<dvec>& in) {
      return oracle::dot(oracle::relu(in[0]), pr);
    };
    CHECK(oracle::normwise_rel_err(g.grad(xi), oracle::fd_gradient(f, inputs, 0)) < kFdTol);
  }
}

TEST_CASE("add_weighted: unit single term passes through bitwise") {
  Graph g;
  Rng rng(17);
  NumArray x = random_array({3, 4}, rng);
  NumArray y = random_array({3, 4}, rng);
  const int xi = g.leaf(x), yi = g.leaf(y);
  const int out = g.add_weighted({xi, yi}, {1.0f, 0.0f});
  CHECK(g.value(out).data == x.data);

  g.backward(g.reduce_dot(out, NumArray::full({3, 4}, 1.0f)));
  for (float v : g.grad(yi).data) CHECK(v == 0.0f);
  for (float v : g.grad(xi).data) CHECK(v == 1.0f);
}

TEST_CASE("sgd_step: lr 0 and zero gradients leave params untouched") {
  Rng rng(18);
  NumArray p = random_array({4, 4}, rng);
  const NumArray orig = p;
  sgd_step(p, random_array({4, 4}, rng), 0.0f);
  CHECK(p.data == orig.data);
  sgd_step(p, NumArray::zeros({4, 4}), 0.1f);
  CHECK(p.data == orig.data);
}

TEST_CASE("sgd_step: direct substitution p=1 g=0.5 lr=0.1") {
  NumArray p = NumArray::from({1}, {1.0f});
  sgd_step(p, NumArray::from({1}, {0.5f}), 0.1f);
  CHECK(p.data[0] == doctest::Approx(0.95f).epsilon(1e-7));
  NumArray q = NumArray::from({2}, {1.0f, 2.0f});
  CHECK_THROWS_AS(sgd_step(q, NumArray::zeros({3}), 0.1f), DimensionError);
}

TEST_CASE("forward passes are deterministic (bitwise repeat)") {
  auto run = [] {
    Rng rng(19);
    Graph g;
    NumArray x = NumArray::zeros({8, 6});
    for (float& v : x.data) v = rng.uniform_float(-1.0f, 1.0f);
    BatchNormState state = BatchNormState::init(4);
    const int xi = g.leaf(x);
    const int w = g.leaf(NumArray::full({6, 4}, 0.11f));
    const int b = g.leaf(NumArray::full({4}, 0.01f));
    const int h = g.relu(g.affine(xi, w, b));
    const int bn = g.batchnorm(h, g.leaf(state.gamma), g.leaf(state.beta), state,
                               BnMode::train);
    return g.value(bn).data;
  };
  CHECK(run() == run());
}

TEST_CASE("non-finite inputs are rejected at graph boundaries") {
  Graph g;
  NumArray bad = NumArray::zeros({2, 2});
  bad.data[1] = std::numeric_limits<float>::infinity();
  CHECK_THROWS_AS(g.leaf(bad), NumericError);
}
