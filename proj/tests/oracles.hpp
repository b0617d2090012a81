// Double-precision reference implementations and finite-difference helpers.
// Everything here is scalar-loop code kept independent of the library's
// float32 kernels; the gradient tests trust these, not the implementation.

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "epd/numarray.hpp"

namespace oracle {

using dvec = std::vector<double>;

inline dvec to_d(const epd::NumArray& a) {
  dvec out(a.data.size());
  for (size_t i = 0; i < a.data.size(); ++i) out[i] = static_cast<double>(a.data[i]);
  return out;
}

inline dvec affine(const dvec& x, const dvec& w, const dvec& b, int64_t n, int64_t k,
                   int64_t m) {
  dvec out(static_cast<size_t>(n * m), 0.0);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < m; ++j) {
      double acc = b[static_cast<size_t>(j)];
      for (int64_t p = 0; p < k; ++p)
        acc += x[static_cast<size_t>(i * k + p)] * w[static_cast<size_t>(p * m + j)];
      out[static_cast<size_t>(i * m + j)] = acc;
    }
  return out;
}

inline dvec hadamard(const dvec& x, const dvec& y) {
  dvec out(x.size());
  for (size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  return out;
}

inline dvec relu(const dvec& x) {
  dvec out(x.size());
  for (size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
  return out;
}

inline dvec gather(const dvec& table, const std::vector<int64_t>& ids, int64_t d) {
  dvec out(ids.size() * static_cast<size_t>(d));
  for (size_t i = 0; i < ids.size(); ++i)
    for (int64_t j = 0; j < d; ++j)
      out[i * static_cast<size_t>(d) + static_cast<size_t>(j)] =
          table[static_cast<size_t>(ids[i] * d + j)];
  return out;
}

inline dvec bn_train(const dvec& x, const dvec& gamma, const dvec& beta, int64_t n,
                     int64_t c, double eps) {
  dvec out(x.size());
  for (int64_t ch = 0; ch < c; ++ch) {
    double mu = 0.0;
    for (int64_t i = 0; i < n; ++i) mu += x[static_cast<size_t>(i * c + ch)];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      const double d = x[static_cast<size_t>(i * c + ch)] - mu;
      var += d * d;
    }
    var /= static_cast<double>(n);
    const double rstd = 1.0 / std::sqrt(var + eps);
    for (int64_t i = 0; i < n; ++i) {
      const double h = (x[static_cast<size_t>(i * c + ch)] - mu) * rstd;
      out[static_cast<size_t>(i * c + ch)] =
          gamma[static_cast<size_t>(ch)] * h + beta[static_cast<size_t>(ch)];
    }
  }
  return out;
}

inline double softmax_xent(const dvec& z, const std::vector<int64_t>& targets,
                           int64_t n, int64_t c) {
  double total = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    double mx = z[static_cast<size_t>(i * c)];
    for (int64_t j = 1; j < c; ++j)
      mx = std::max(mx, z[static_cast<size_t>(i * c + j)]);
    double denom = 0.0;
    for (int64_t j = 0; j < c; ++j)
      denom += std::exp(z[static_cast<size_t>(i * c + j)] - mx);
    const double logp =
        z[static_cast<size_t>(i * c + targets[static_cast<size_t>(i)])] - mx -
        std::log(denom);
    total += -logp;
  }
  return total / static_cast<double>(n);
}

inline double dot(const dvec& a, const dvec& b) {
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

// Central finite difference of f with respect to inputs[leaf][idx].
inline double central_diff(const std::function<double(const std::vector<dvec>&)>& f,
                           std::vector<dvec>& inputs, size_t leaf, size_t idx,
                           double h = 1e-3) {
  const double orig = inputs[leaf][idx];
  inputs[leaf][idx] = orig + h;
  const double fp = f(inputs);
  inputs[leaf][idx] = orig - h;
  const double fm = f(inputs);
  inputs[leaf][idx] = orig;
  return (fp - fm) / (2.0 * h);
}

// Normwise relative error ||a - n|| / (||a|| + ||n||), 0 when both vanish.
inline double normwise_rel_err(const epd::NumArray& analytic, const dvec& numeric) {
  double diff2 = 0.0, na2 = 0.0, nn2 = 0.0;
  for (size_t i = 0; i < numeric.size(); ++i) {
    const double a = static_cast<double>(analytic.data[i]);
    const double d = a - numeric[i];
    diff2 += d * d;
    na2 += a * a;
    nn2 += numeric[i] * numeric[i];
  }
  const double denom = std::sqrt(na2) + std::sqrt(nn2);
  if (denom < 1e-12) return 0.0;
  return std::sqrt(diff2) / denom;
}

// Full gradient of a scalar double function with respect to one leaf.
inline dvec fd_gradient(const std::function<double(const std::vector<dvec>&)>& f,
                        std::vector<dvec>& inputs, size_t leaf, double h = 1e-3) {
  dvec g(inputs[leaf].size());
  for (size_t i = 0; i < g.size(); ++i) g[i] = central_diff(f, inputs, leaf, i, h);
  return g;
}

}  // namespace oracle
