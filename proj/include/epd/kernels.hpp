#pragma once

#include <cstdint>

namespace epd::kernels {

// Two implementations of every hot loop: `serial` is the reference the tests
// trust, `omp` parallelizes across independent output elements only. No
// floating-point reduction is ever split across threads, so both variants
// produce bitwise-identical results for identical inputs and any thread count.

namespace serial {

// C[m x n] = A[m x k] * B[k x n]
void gemm_nn(int64_t m, int64_t k, int64_t n, const float* A, const float* B, float* C);
// C[m x n] = A[m x k] * B[n x k]^T
void gemm_nt(int64_t m, int64_t k, int64_t n, const float* A, const float* B, float* C);
// C[k x n] = A[m x k]^T * B[m x n]
void gemm_tn(int64_t m, int64_t k, int64_t n, const float* A, const float* B, float* C);

void add_bias_rows(int64_t m, int64_t n, const float* bias, float* C);
// out[j] += sum_i G[i,j]
void col_sums_accum(int64_t m, int64_t n, const float* G, float* out);

// Train-mode batch norm over x[n x c]: per-channel batch statistics, saves
// x_hat and 1/sqrt(var+eps) for the backward pass.
void bn_train_forward(int64_t n, int64_t c, const float* x, const float* gamma,
                      const float* beta, float eps, float* out, float* xhat,
                      float* mean, float* var, float* rstd);
void bn_eval_forward(int64_t n, int64_t c, const float* x, const float* gamma,
                     const float* beta, const float* running_mean,
                     const float* running_var, float eps, float* out, float* xhat);
// dgamma[c] += sum_i gy*xhat; dbeta[c] += sum_i gy;
// dx[i,c] += gamma*rstd*(gy - mean(gy) - xhat*mean(gy*xhat))  (batch-stat mode)
void bn_train_backward(int64_t n, int64_t c, const float* gy, const float* gamma,
                       const float* xhat, const float* rstd, float* dx,
                       float* dgamma, float* dbeta);
// Eval mode treats mean/var as constants: dx[i,c] += gamma*rstd*gy.
void bn_eval_backward(int64_t n, int64_t c, const float* gy, const float* gamma,
                      const float* xhat, const float* rstd, float* dx,
                      float* dgamma, float* dbeta);

// Row-wise softmax with max subtraction.
void softmax_rows(int64_t n, int64_t c, const float* z, float* probs);
// loss = mean over rows of -log probs[target]; probs saved for backward.
void softmax_xent_forward(int64_t n, int64_t c, const float* z, const int64_t* targets,
                          float* probs, float* loss);
// dz[i,j] += gscale * (probs[i,j] - onehot) / n
void softmax_xent_backward(int64_t n, int64_t c, const float* probs,
                           const int64_t* targets, float gscale, float* dz);

void hadamard(int64_t n, const float* x, const float* y, float* out);
// out[i] += a[i] * b[i]
void multiply_add(int64_t n, const float* a, const float* b, float* out);
void relu(int64_t n, const float* x, float* out);
// dx[i] += g[i] * (x[i] > 0)
void relu_backward(int64_t n, const float* x, const float* g, float* dx);
// out[i] += w * x[i]
void axpy(int64_t n, float w, const float* x, float* out);

}  // namespace serial

namespace omp {

void gemm_nn(int64_t m, int64_t k, int64_t n, const float* A, const float* B, float* C);
void gemm_nt(int64_t m, int64_t k, int64_t n, const float* A, const float* B, float* C);
void gemm_tn(int64_t m, int64_t k, int64_t n, const float* A, const float* B, float* C);
void add_bias_rows(int64_t m, int64_t n, const float* bias, float* C);
void col_sums_accum(int64_t m, int64_t n, const float* G, float* out);
void bn_train_forward(int64_t n, int64_t c, const float* x, const float* gamma,
                      const float* beta, float eps, float* out, float* xhat,
                      float* mean, float* var, float* rstd);
void bn_eval_forward(int64_t n, int64_t c, const float* x, const float* gamma,
                     const float* beta, const float* running_mean,
                     const float* running_var, float eps, float* out, float* xhat);
void bn_train_backward(int64_t n, int64_t c, const float* gy, const float* gamma,
                       const float* xhat, const float* rstd, float* dx,
                       float* dgamma, float* dbeta);
void bn_eval_backward(int64_t n, int64_t c, const float* gy, const float* gamma,
                      const float* xhat, const float* rstd, float* dx,
                      float* dgamma, float* dbeta);
void softmax_rows(int64_t n, int64_t c, const float* z, float* probs);
void softmax_xent_forward(int64_t n, int64_t c, const float* z, const int64_t* targets,
                          float* probs, float* loss);
void softmax_xent_backward(int64_t n, int64_t c, const float* probs,
                           const int64_t* targets, float gscale, float* dz);
void hadamard(int64_t n, const float* x, const float* y, float* out);
void multiply_add(int64_t n, const float* a, const float* b, float* out);
void relu(int64_t n, const float* x, float* out);
void relu_backward(int64_t n, const float* x, const float* g, float* dx);
void axpy(int64_t n, float w, const float* x, float* out);

}  // namespace omp

bool parallel_enabled();
void set_parallel(bool enabled);

// Dispatchers used by the autograd ops; route to omp:: or serial:: based on
// the global toggle.
void gemm_nn(int64_t m, int64_t k, int64_t n, const float* A, const float* B, float* C);
void gemm_nt(int64_t m, int64_t k, int64_t n, const float* A, const float* B, float* C);
void gemm_tn(int64_t m, int64_t k, int64_t n, const float* A, const float* B, float* C);
void add_bias_rows(int64_t m, int64_t n, const float* bias, float* C);
void col_sums_accum(int64_t m, int64_t n, const float* G, float* out);
void bn_train_forward(int64_t n, int64_t c, const float* x, const float* gamma,
                      const float* beta, float eps, float* out, float* xhat,
                      float* mean, float* var, float* rstd);
void bn_eval_forward(int64_t n, int64_t c, const float* x, const float* gamma,
                     const float* beta, const float* running_mean,
                     const float* running_var, float eps, float* out, float* xhat);
void bn_train_backward(int64_t n, int64_t c, const float* gy, const float* gamma,
                       const float* xhat, const float* rstd, float* dx,
                       float* dgamma, float* dbeta);
void bn_eval_backward(int64_t n, int64_t c, const float* gy, const float* gamma,
                      const float* xhat, const float* rstd, float* dx,
                      float* dgamma, float* dbeta);
void softmax_rows(int64_t n, int64_t c, const float* z, float* probs);
void softmax_xent_forward(int64_t n, int64_t c, const float* z, const int64_t* targets,
                          float* probs, float* loss);
void softmax_xent_backward(int64_t n, int64_t c, const float* probs,
                           const int64_t* targets, float gscale, float* dz);
void hadamard(int64_t n, const float* x, const float* y, float* out);
void multiply_add(int64_t n, const float* a, const float* b, float* out);
void relu(int64_t n, const float* x, float* out);
void relu_backward(int64_t n, const float* x, const float* g, float* dx);
void axpy(int64_t n, float w, const float* x, float* out);

}  // namespace epd::kernels
