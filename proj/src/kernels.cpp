#include "epd/kernels.hpp"

#include <atomic>
#include <cmath>

namespace epd::kernels {

namespace serial {

void gemm_nn(int64_t m, int64_t k, int64_t n, const float* A, const float* B, float* C) {
  for (int64_t i = 0; i < m; ++i) {
    float* c = C + i * n;
    for (int64_t j = 0; j < n; ++j) c[j] = 0.0f;
    const float* a = A + i * k;
    for (int64_t p = 0; p < k; ++p) {
      const float a_ip = a[p];
      const float* b = B + p * n;
      for (int64_t j = 0; j < n; ++j) c[j] += a_ip * b[j];
    }
  }
}

void gemm_nt(int64_t m, int64_t k, int64_t n, const float* A, const float* B, float* C) {
  for (int64_t i = 0; i < m; ++i) {
    const float* a = A + i * k;
    float* c = C + i * n;
    for (int64_t j = 0; j < n; ++j) {
      const float* b = B + j * k;
      float acc = 0.0f;
      for (int64_t p = 0; p < k; ++p) acc += a[p] * b[p];
      c[j] = acc;
    }
  }
}

void gemm_tn(int64_t m, int64_t k, int64_t n, const float* A, const float* B, float* C) {
  for (int64_t p = 0; p < k; ++p) {
    float* c = C + p * n;
    for (int64_t j = 0; j < n; ++j) c[j] = 0.0f;
    for (int64_t i = 0; i < m; ++i) {
      const float a_ip = A[i * k + p];
      const float* b = B + i * n;
      for (int64_t j = 0; j < n; ++j) c[j] += a_ip * b[j];
    }
  }
}

void add_bias_rows(int64_t m, int64_t n, const float* bias, float* C) {
  for (int64_t i = 0; i < m; ++i) {
    float* c = C + i * n;
    for (int64_t j = 0; j < n; ++j) c[j] += bias[j];
  }
}

void col_sums_accum(int64_t m, int64_t n, const float* G, float* out) {
  for (int64_t j = 0; j < n; ++j) {
    float acc = 0.0f;
    for (int64_t i = 0; i < m; ++i) acc += G[i * n + j];
    out[j] += acc;
  }
}

void bn_train_forward(int64_t n, int64_t c, const float* x, const float* gamma,
                      const float* beta, float eps, float* out, float* xhat,
                      float* mean, float* var, float* rstd) {
  for (int64_t ch = 0; ch < c; ++ch) {
    float mu = 0.0f;
    for (int64_t i = 0; i < n; ++i) mu += x[i * c + ch];
    mu /= static_cast<float>(n);
    float v = 0.0f;
    for (int64_t i = 0; i < n; ++i) {
      const float d = x[i * c + ch] - mu;
      v += d * d;
    }
    v /= static_cast<float>(n);
    const float r = 1.0f / std::sqrt(v + eps);
    mean[ch] = mu;
    var[ch] = v;
    rstd[ch] = r;
    for (int64_t i = 0; i < n; ++i) {
      const float h = (x[i * c + ch] - mu) * r;
      xhat[i * c + ch] = h;
      out[i * c + ch] = gamma[ch] * h + beta[ch];
    }
  }
}

void bn_eval_forward(int64_t n, int64_t c, const float* x, const float* gamma,
                     const float* beta, const float* running_mean,
                     const float* running_var, float eps, float* out, float* xhat) {
  for (int64_t ch = 0; ch < c; ++ch) {
    const float mu = running_mean[ch];
    const float r = 1.0f / std::sqrt(running_var[ch] + eps);
    for (int64_t i = 0; i < n; ++i) {
      const float h = (x[i * c + ch] - mu) * r;
      xhat[i * c + ch] = h;
      out[i * c + ch] = gamma[ch] * h + beta[ch];
    }
  }
}

void bn_train_backward(int64_t n, int64_t c, const float* gy, const float* gamma,
                       const float* xhat, const float* rstd, float* dx,
                       float* dgamma, float* dbeta) {
  const float inv_n = 1.0f / static_cast<float>(n);
  for (int64_t ch = 0; ch < c; ++ch) {
    float sum_gy = 0.0f;
    float sum_gy_xhat = 0.0f;
    for (int64_t i = 0; i < n; ++i) {
      const float g = gy[i * c + ch];
      sum_gy += g;
      sum_gy_xhat += g * xhat[i * c + ch];
    }
    dgamma[ch] += sum_gy_xhat;
    dbeta[ch] += sum_gy;
    const float s = gamma[ch] * rstd[ch];
    const float m1 = sum_gy * inv_n;
    const float m2 = sum_gy_xhat * inv_n;
    for (int64_t i = 0; i < n; ++i) {
      dx[i * c + ch] += s * (gy[i * c + ch] - m1 - xhat[i * c + ch] * m2);
    }
  }
}

void bn_eval_backward(int64_t n, int64_t c, const float* gy, const float* gamma,
                      const float* xhat, const float* rstd, float* dx,
                      float* dgamma, float* dbeta) {
  for (int64_t ch = 0; ch < c; ++ch) {
    float sum_gy = 0.0f;
    float sum_gy_xhat = 0.0f;
    for (int64_t i = 0; i < n; ++i) {
      const float g = gy[i * c + ch];
      sum_gy += g;
      sum_gy_xhat += g * xhat[i * c + ch];
    }
    dgamma[ch] += sum_gy_xhat;
    dbeta[ch] += sum_gy;
    const float s = gamma[ch] * rstd[ch];
    for (int64_t i = 0; i < n; ++i) dx[i * c + ch] += s * gy[i * c + ch];
  }
}

void softmax_rows(int64_t n, int64_t c, const float* z, float* probs) {
  for (int64_t i = 0; i < n; ++i) {
    const float* zi = z + i * c;
    float* pi = probs + i * c;
    float mx = zi[0];
    for (int64_t j = 1; j < c; ++j) mx = std::max(mx, zi[j]);
    float denom = 0.0f;
    for (int64_t j = 0; j < c; ++j) {
      pi[j] = std::exp(zi[j] - mx);
      denom += pi[j];
    }
    const float inv = 1.0f / denom;
    for (int64_t j = 0; j < c; ++j) pi[j] *= inv;
  }
}

void softmax_xent_forward(int64_t n, int64_t c, const float* z, const int64_t* targets,
                          float* probs, float* loss) {
  softmax_rows(n, c, z, probs);
  // Serial sum in row order: the loss must not depend on thread count.
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    acc += -std::log(static_cast<double>(probs[i * c + targets[i]]));
  }
  *loss = static_cast<float>(acc / static_cast<double>(n));
}

void softmax_xent_backward(int64_t n, int64_t c, const float* probs,
                           const int64_t* targets, float gscale, float* dz) {
  const float s = gscale / static_cast<float>(n);
  for (int64_t i = 0; i < n; ++i) {
    const float* pi = probs + i * c;
    float* d = dz + i * c;
    for (int64_t j = 0; j < c; ++j) d[j] += s * pi[j];
    d[targets[i]] -= s;
  }
}

void hadamard(int64_t n, const float* x, const float* y, float* out) {
  for (int64_t i = 0; i < n; ++i) out[i] = x[i] * y[i];
}

void multiply_add(int64_t n, const float* a, const float* b, float* out) {
  for (int64_t i = 0; i < n; ++i) out[i] += a[i] * b[i];
}

void relu(int64_t n, const float* x, float* out) {
  for (int64_t i = 0; i < n; ++i) out[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_backward(int64_t n, const float* x, const float* g, float* dx) {
  for (int64_t i = 0; i < n; ++i)
    if (x[i] > 0.0f) dx[i] += g[i];
}

void axpy(int64_t n, float w, const float* x, float* out) {
  for (int64_t i = 0; i < n; ++i) out[i] += w * x[i];
}

}  // namespace serial

namespace omp {

// Work thresholds below which the parallel-for is skipped; tiny batches are
// cheaper on one thread.
constexpr int64_t kGemmThreshold = 1 << 15;
constexpr int64_t kRowThreshold = 1 << 12;
constexpr int64_t kFlatThreshold = 1 << 16;

void gemm_nn(int64_t m, int64_t k, int64_t n, const float* A, const float* B, float* C) {
#pragma omp parallel for schedule(static) if (m * k * n > kGemmThreshold)
  for (int64_t i = 0; i < m; ++i) {
    float* c = C + i * n;
    for (int64_t j = 0; j < n; ++j) c[j] = 0.0f;
    const float* a = A + i * k;
    for (int64_t p = 0; p < k; ++p) {
      const float a_ip = a[p];
      const float* b = B + p * n;
#pragma omp simd
      for (int64_t j = 0; j < n; ++j) c[j] += a_ip * b[j];
    }
  }
}

void gemm_nt(int64_t m, int64_t k, int64_t n, const float* A, const float* B, float* C) {
#pragma omp parallel for schedule(static) if (m * k * n > kGemmThreshold)
  for (int64_t i = 0; i < m; ++i) {
    const float* a = A + i * k;
    float* c = C + i * n;
    for (int64_t j = 0; j < n; ++j) {
      const float* b = B + j * k;
      float acc = 0.0f;
      for (int64_t p = 0; p < k; ++p) acc += a[p] * b[p];
      c[j] = acc;
    }
  }
}

void gemm_tn(int64_t m, int64_t k, int64_t n, const float* A, const float* B, float* C) {
#pragma omp parallel for schedule(static) if (m * k * n > kGemmThreshold)
  for (int64_t p = 0; p < k; ++p) {
    float* c = C + p * n;
    for (int64_t j = 0; j < n; ++j) c[j] = 0.0f;
    for (int64_t i = 0; i < m; ++i) {
      const float a_ip = A[i * k + p];
      const float* b = B + i * n;
#pragma omp simd
      for (int64_t j = 0; j < n; ++j) c[j] += a_ip * b[j];
    }
  }
}

void add_bias_rows(int64_t m, int64_t n, const float* bias, float* C) {
#pragma omp parallel for schedule(static) if (m * n > kRowThreshold)
  for (int64_t i = 0; i < m; ++i) {
    float* c = C + i * n;
    for (int64_t j = 0; j < n; ++j) c[j] += bias[j];
  }
}

void col_sums_accum(int64_t m, int64_t n, const float* G, float* out) {
#pragma omp parallel for schedule(static) if (m * n > kRowThreshold)
  for (int64_t j = 0; j < n; ++j) {
    float acc = 0.0f;
    for (int64_t i = 0; i < m; ++i) acc += G[i * n + j];
    out[j] += acc;
  }
}

void bn_train_forward(int64_t n, int64_t c, const float* x, const float* gamma,
                      const float* beta, float eps, float* out, float* xhat,
                      float* mean, float* var, float* rstd) {
#pragma omp parallel for schedule(static) if (n * c > kRowThreshold)
  for (int64_t ch = 0; ch < c; ++ch) {
    float mu = 0.0f;
    for (int64_t i = 0; i < n; ++i) mu += x[i * c + ch];
    mu /= static_cast<float>(n);
    float v = 0.0f;
    for (int64_t i = 0; i < n; ++i) {
      const float d = x[i * c + ch] - mu;
      v += d * d;
    }
    v /= static_cast<float>(n);
    const float r = 1.0f / std::sqrt(v + eps);
    mean[ch] = mu;
    var[ch] = v;
    rstd[ch] = r;
    for (int64_t i = 0; i < n; ++i) {
      const float h = (x[i * c + ch] - mu) * r;
      xhat[i * c + ch] = h;
      out[i * c + ch] = gamma[ch] * h + beta[ch];
    }
  }
}

void bn_eval_forward(int64_t n, int64_t c, const float* x, const float* gamma,
                     const float* beta, const float* running_mean,
                     const float* running_var, float eps, float* out, float* xhat) {
#pragma omp parallel for schedule(static) if (n * c > kRowThreshold)
  for (int64_t ch = 0; ch < c; ++ch) {
    const float mu = running_mean[ch];
    const float r = 1.0f / std::sqrt(running_var[ch] + eps);
    for (int64_t i = 0; i < n; ++i) {
      const float h = (x[i * c + ch] - mu) * r;
      xhat[i * c + ch] = h;
      out[i * c + ch] = gamma[ch] * h + beta[ch];
    }
  }
}

void bn_train_backward(int64_t n, int64_t c, const float* gy, const float* gamma,
                       const float* xhat, const float* rstd, float* dx,
                       float* dgamma, float* dbeta) {
  const float inv_n = 1.0f / static_cast<float>(n);
#pragma omp parallel for schedule(static) if (n * c > kRowThreshold)
  for (int64_t ch = 0; ch < c; ++ch) {
    float sum_gy = 0.0f;
    float sum_gy_xhat = 0.0f;
    for (int64_t i = 0; i < n; ++i) {
      const float g = gy[i * c + ch];
      sum_gy += g;
      sum_gy_xhat += g * xhat[i * c + ch];
    }
    dgamma[ch] += sum_gy_xhat;
    dbeta[ch] += sum_gy;
    const float s = gamma[ch] * rstd[ch];
    const float m1 = sum_gy * inv_n;
    const float m2 = sum_gy_xhat * inv_n;
    for (int64_t i = 0; i < n; ++i) {
      dx[i * c + ch] += s * (gy[i * c + ch] - m1 - xhat[i * c + ch] * m2);
    }
  }
}

void bn_eval_backward(int64_t n, int64_t c, const float* gy, const float* gamma,
                      const float* xhat, const float* rstd, float* dx,
                      float* dgamma, float* dbeta) {
#pragma omp parallel for schedule(static) if (n * c > kRowThreshold)
  for (int64_t ch = 0; ch < c; ++ch) {
    float sum_gy = 0.0f;
    float sum_gy_xhat = 0.0f;
    for (int64_t i = 0; i < n; ++i) {
      const float g = gy[i * c + ch];
      sum_gy += g;
      sum_gy_xhat += g * xhat[i * c + ch];
    }
    dgamma[ch] += sum_gy_xhat;
    dbeta[ch] += sum_gy;
    const float s = gamma[ch] * rstd[ch];
    for (int64_t i = 0; i < n; ++i) dx[i * c + ch] += s * gy[i * c + ch];
  }
}

void softmax_rows(int64_t n, int64_t c, const float* z, float* probs) {
#pragma omp parallel for schedule(static) if (n * c > kRowThreshold)
  for (int64_t i = 0; i < n; ++i) {
    const float* zi = z + i * c;
    float* pi = probs + i * c;
    float mx = zi[0];
    for (int64_t j = 1; j < c; ++j) mx = std::max(mx, zi[j]);
    float denom = 0.0f;
    for (int64_t j = 0; j < c; ++j) {
      pi[j] = std::exp(zi[j] - mx);
      denom += pi[j];
    }
    const float inv = 1.0f / denom;
    for (int64_t j = 0; j < c; ++j) pi[j] *= inv;
  }
}

void softmax_xent_forward(int64_t n, int64_t c, const float* z, const int64_t* targets,
                          float* probs, float* loss) {
  softmax_rows(n, c, z, probs);
  // The reduction stays serial: a fixed summation order keeps the loss
  // identical for any thread count.
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    acc += -std::log(static_cast<double>(probs[i * c + targets[i]]));
  }
  *loss = static_cast<float>(acc / static_cast<double>(n));
}

void softmax_xent_backward(int64_t n, int64_t c, const float* probs,
                           const int64_t* targets, float gscale, float* dz) {
  const float s = gscale / static_cast<float>(n);
#pragma omp parallel for schedule(static) if (n * c > kRowThreshold)
  for (int64_t i = 0; i < n; ++i) {
    const float* pi = probs + i * c;
    float* d = dz + i * c;
    for (int64_t j = 0; j < c; ++j) d[j] += s * pi[j];
    d[targets[i]] -= s;
  }
}

void hadamard(int64_t n, const float* x, const float* y, float* out) {
#pragma omp parallel for schedule(static) if (n > kFlatThreshold)
  for (int64_t i = 0; i < n; ++i) out[i] = x[i] * y[i];
}

void multiply_add(int64_t n, const float* a, const float* b, float* out) {
#pragma omp parallel for schedule(static) if (n > kFlatThreshold)
  for (int64_t i = 0; i < n; ++i) out[i] += a[i] * b[i];
}

void relu(int64_t n, const float* x, float* out) {
#pragma omp parallel for schedule(static) if (n > kFlatThreshold)
  for (int64_t i = 0; i < n; ++i) out[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_backward(int64_t n, const float* x, const float* g, float* dx) {
#pragma omp parallel for schedule(static) if (n > kFlatThreshold)
  for (int64_t i = 0; i < n; ++i)
    if (x[i] > 0.0f) dx[i] += g[i];
}

void axpy(int64_t n, float w, const float* x, float* out) {
#pragma omp parallel for schedule(static) if (n > kFlatThreshold)
  for (int64_t i = 0; i < n; ++i) out[i] += w * x[i];
}

}  // namespace omp

namespace {
std::atomic<bool> g_parallel{true};
}

bool parallel_enabled() { return g_parallel.load(std::memory_order_relaxed); }
void set_parallel(bool enabled) { g_parallel.store(enabled, std::memory_order_relaxed); }

#define EPD_DISPATCH(fn, ...)          \
  do {                                 \
    if (parallel_enabled())            \
      omp::fn(__VA_ARGS__);            \
    else                               \
      serial::fn(__VA_ARGS__);         \
  } while (0)

void gemm_nn(int64_t m, int64_t k, int64_t n, const float* A, const float* B, float* C) {
  EPD_DISPATCH(gemm_nn, m, k, n, A, B, C);
}
void gemm_nt(int64_t m, int64_t k, int64_t n, const float* A, const float* B, float* C) {
  EPD_DISPATCH(gemm_nt, m, k, n, A, B, C);
}
void gemm_tn(int64_t m, int64_t k, int64_t n, const float* A, const float* B, float* C) {
  EPD_DISPATCH(gemm_tn, m, k, n, A, B, C);
}
void add_bias_rows(int64_t m, int64_t n, const float* bias, float* C) {
  EPD_DISPATCH(add_bias_rows, m, n, bias, C);
}
void col_sums_accum(int64_t m, int64_t n, const float* G, float* out) {
  EPD_DISPATCH(col_sums_accum, m, n, G, out);
}
void bn_train_forward(int64_t n, int64_t c, const float* x, const float* gamma,
                      const float* beta, float eps, float* out, float* xhat,
                      float* mean, float* var, float* rstd) {
  EPD_DISPATCH(bn_train_forward, n, c, x, gamma, beta, eps, out, xhat, mean, var, rstd);
}
void bn_eval_forward(int64_t n, int64_t c, const float* x, const float* gamma,
                     const float* beta, const float* running_mean,
                     const float* running_var, float eps, float* out, float* xhat) {
  EPD_DISPATCH(bn_eval_forward, n, c, x, gamma, beta, running_mean, running_var, eps,
               out, xhat);
}
void bn_train_backward(int64_t n, int64_t c, const float* gy, const float* gamma,
                       const float* xhat, const float* rstd, float* dx,
                       float* dgamma, float* dbeta) {
  EPD_DISPATCH(bn_train_backward, n, c, gy, gamma, xhat, rstd, dx, dgamma, dbeta);
}
void bn_eval_backward(int64_t n, int64_t c, const float* gy, const float* gamma,
                      const float* xhat, const float* rstd, float* dx,
                      float* dgamma, float* dbeta) {
  EPD_DISPATCH(bn_eval_backward, n, c, gy, gamma, xhat, rstd, dx, dgamma, dbeta);
}
void softmax_rows(int64_t n, int64_t c, const float* z, float* probs) {
  EPD_DISPATCH(softmax_rows, n, c, z, probs);
}
void softmax_xent_forward(int64_t n, int64_t c, const float* z, const int64_t* targets,
                          float* probs, float* loss) {
  EPD_DISPATCH(softmax_xent_forward, n, c, z, targets, probs, loss);
}
void softmax_xent_backward(int64_t n, int64_t c, const float* probs,
                           const int64_t* targets, float gscale, float* dz) {
  EPD_DISPATCH(softmax_xent_backward, n, c, probs, targets, gscale, dz);
}
void hadamard(int64_t n, const float* x, const float* y, float* out) {
  EPD_DISPATCH(hadamard, n, x, y, out);
}
void multiply_add(int64_t n, const float* a, const float* b, float* out) {
  EPD_DISPATCH(multiply_add, n, a, b, out);
}
void relu(int64_t n, const float* x, float* out) { EPD_DISPATCH(relu, n, x, out); }
void relu_backward(int64_t n, const float* x, const float* g, float* dx) {
  EPD_DISPATCH(relu_backward, n, x, g, dx);
}
void axpy(int64_t n, float w, const float* x, float* out) {
  EPD_DISPATCH(axpy, n, w, x, out);
}

#undef EPD_DISPATCH

}  // namespace epd::kernels
