#include "epd/autograd.hpp"

#include <cmath>
#include <memory>
#include <utility>

#include "epd/kernels.hpp"

namespace epd {

BatchNormState BatchNormState::init(int64_t channels) {
  BatchNormState s;
  s.gamma = NumArray::full({channels}, 1.0f);
  s.beta = NumArray::zeros({channels});
  s.running_mean = NumArray::zeros({channels});
  s.running_var = NumArray::full({channels}, 1.0f);
  return s;
}

int Graph::push(NumArray value, std::function<void(Graph&, int)> fn, const char* opname) {
  check_finite(value, opname);
  Node n;
  n.value = std::move(value);
  n.backward_fn = std::move(fn);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

int Graph::leaf(NumArray value) { return push(std::move(value), nullptr, "leaf"); }

NumArray& Graph::grad_buf(int id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (!n.touched) {
    n.grad = NumArray::zeros(n.value.shape);
    n.touched = true;
  }
  return n.grad;
}

const NumArray& Graph::grad(int id) { return grad_buf(id); }

int Graph::affine(int x, int w, int b) {
  const NumArray& xv = value(x);
  const NumArray& wv = value(w);
  const NumArray& bv = value(b);
  if (xv.ndim() != 2 || wv.ndim() != 2 || bv.ndim() != 1)
    throw DimensionError("affine: expected x[n x k], W[k x m], b[m]");
  const int64_t n = xv.rows(), k = xv.cols(), m = wv.cols();
  if (wv.rows() != k || bv.dim(0) != m)
    throw DimensionError("affine: shapes do not conform: x" + xv.shape_str() + " W" +
                         wv.shape_str() + " b" + bv.shape_str());

  NumArray out = NumArray::zeros({n, m});
  kernels::gemm_nn(n, k, m, xv.data.data(), wv.data.data(), out.data.data());
  kernels::add_bias_rows(n, m, bv.data.data(), out.data.data());

  auto back = [x, w, b, n, k, m](Graph& g, int self) {
    const NumArray& gy = g.grad_buf(self);
    const NumArray& xv2 = g.value(x);
    const NumArray& wv2 = g.value(w);
    // dx = gy * W^T
    NumArray dx = NumArray::zeros({n, k});
    kernels::gemm_nt(n, m, k, gy.data.data(), wv2.data.data(), dx.data.data());
    kernels::axpy(n * k, 1.0f, dx.data.data(), g.grad_buf(x).data.data());
    // dW = x^T * gy
    NumArray dw = NumArray::zeros({k, m});
    kernels::gemm_tn(n, k, m, xv2.data.data(), gy.data.data(), dw.data.data());
    kernels::axpy(k * m, 1.0f, dw.data.data(), g.grad_buf(w).data.data());
    // db = column sums of gy
    kernels::col_sums_accum(n, m, gy.data.data(), g.grad_buf(b).data.data());
  };
  return push(std::move(out), back, "affine");
}

int Graph::concat(const std::vector<int>& xs) {
  if (xs.empty()) throw DimensionError("concat: empty input list");
  const int64_t n = value(xs[0]).rows();
  int64_t total = 0;
  for (int id : xs) {
    const NumArray& v = value(id);
    if (v.ndim() != 2) throw DimensionError("concat: inputs must be 2-D");
    if (v.rows() != n) throw DimensionError("concat: mismatched leading dims");
    total += v.cols();
  }
  NumArray out = NumArray::zeros({n, total});
  int64_t off = 0;
  for (int id : xs) {
    const NumArray& v = value(id);
    const int64_t c = v.cols();
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < c; ++j) out.at(i, off + j) = v.at(i, j);
    off += c;
  }
  auto back = [xs, n, total](Graph& g, int self) {
    const NumArray& gy = g.grad_buf(self);
    int64_t off2 = 0;
    for (int id : xs) {
      NumArray& gx = g.grad_buf(id);
      const int64_t c = gx.cols();
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < c; ++j) gx.at(i, j) += gy.data[i * total + off2 + j];
      off2 += c;
    }
  };
  return push(std::move(out), back, "concat");
}

int Graph::hadamard(int x, int y) {
  const NumArray& xv = value(x);
  const NumArray& yv = value(y);
  require_same_shape(xv, yv, "hadamard");
  NumArray out = NumArray::zeros(xv.shape);
  kernels::hadamard(xv.numel(), xv.data.data(), yv.data.data(), out.data.data());
  auto back = [x, y](Graph& g, int self) {
    const NumArray& gy = g.grad_buf(self);
    const int64_t n = gy.numel();
    kernels::multiply_add(n, gy.data.data(), g.value(y).data.data(),
                          g.grad_buf(x).data.data());
    kernels::multiply_add(n, gy.data.data(), g.value(x).data.data(),
                          g.grad_buf(y).data.data());
  };
  return push(std::move(out), back, "hadamard");
}

int Graph::relu(int x) {
  const NumArray& xv = value(x);
  NumArray out = NumArray::zeros(xv.shape);
  kernels::relu(xv.numel(), xv.data.data(), out.data.data());
  auto back = [x](Graph& g, int self) {
    const NumArray& gy = g.grad_buf(self);
    kernels::relu_backward(gy.numel(), g.value(x).data.data(), gy.data.data(),
                           g.grad_buf(x).data.data());
  };
  return push(std::move(out), back, "relu");
}

int Graph::batchnorm(int x, int gamma, int beta, BatchNormState& state, BnMode mode) {
  const NumArray& xv = value(x);
  if (xv.ndim() != 2) throw DimensionError("batchnorm: expected x[n x c]");
  const int64_t n = xv.rows(), c = xv.cols();
  if (value(gamma).numel() != c || value(beta).numel() != c || state.channels() != c ||
      state.running_mean.numel() != c || state.running_var.numel() != c)
    throw DimensionError("batchnorm: channel mismatch with state");
  if (n < 1) throw DimensionError("batchnorm: empty batch");

  struct Saved {
    NumArray xhat, rstd;
  };
  auto saved = std::make_shared<Saved>();
  saved->xhat = NumArray::zeros({n, c});
  saved->rstd = NumArray::zeros({c});
  NumArray out = NumArray::zeros({n, c});

  if (mode == BnMode::train) {
    NumArray mean = NumArray::zeros({c});
    NumArray var = NumArray::zeros({c});
    kernels::bn_train_forward(n, c, xv.data.data(), value(gamma).data.data(),
                              value(beta).data.data(), state.epsilon, out.data.data(),
                              saved->xhat.data.data(), mean.data.data(),
                              var.data.data(), saved->rstd.data.data());
    // Running stats track the unbiased batch variance, matching the usual
    // convention; a single-row batch falls back to the biased value.
    const float unbias =
        n > 1 ? static_cast<float>(n) / static_cast<float>(n - 1) : 1.0f;
    const float m = state.momentum;
    for (int64_t ch = 0; ch < c; ++ch) {
      state.running_mean.data[ch] =
          (1.0f - m) * state.running_mean.data[ch] + m * mean.data[ch];
      state.running_var.data[ch] =
          (1.0f - m) * state.running_var.data[ch] + m * var.data[ch] * unbias;
    }
  } else {
    kernels::bn_eval_forward(n, c, xv.data.data(), value(gamma).data.data(),
                             value(beta).data.data(), state.running_mean.data.data(),
                             state.running_var.data.data(), state.epsilon,
                             out.data.data(), saved->xhat.data.data());
    for (int64_t ch = 0; ch < c; ++ch)
      saved->rstd.data[ch] =
          1.0f / std::sqrt(state.running_var.data[ch] + state.epsilon);
  }

  auto back = [x, gamma, beta, n, c, saved, mode](Graph& g, int self) {
    const NumArray& gy = g.grad_buf(self);
    if (mode == BnMode::train) {
      kernels::bn_train_backward(n, c, gy.data.data(), g.value(gamma).data.data(),
                                 saved->xhat.data.data(), saved->rstd.data.data(),
                                 g.grad_buf(x).data.data(),
                                 g.grad_buf(gamma).data.data(),
                                 g.grad_buf(beta).data.data());
    } else {
      kernels::bn_eval_backward(n, c, gy.data.data(), g.value(gamma).data.data(),
                                saved->xhat.data.data(), saved->rstd.data.data(),
                                g.grad_buf(x).data.data(),
                                g.grad_buf(gamma).data.data(),
                                g.grad_buf(beta).data.data());
    }
  };
  return push(std::move(out), back, "batchnorm");
}

int Graph::gather(int table, std::vector<int64_t> ids) {
  const NumArray& tv = value(table);
  if (tv.ndim() != 2) throw DimensionError("gather: table must be 2-D");
  const int64_t v = tv.rows(), d = tv.cols();
  const int64_t n = static_cast<int64_t>(ids.size());
  if (n == 0) throw DimensionError("gather: empty index list");
  for (int64_t id : ids)
    if (id < 0 || id >= v)
      throw DimensionError("gather: index out of range: " + std::to_string(id));

  NumArray out = NumArray::zeros({n, d});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < d; ++j) out.at(i, j) = tv.at(ids[static_cast<size_t>(i)], j);

  auto back = [table, ids = std::move(ids), n, d](Graph& g, int self) {
    const NumArray& gy = g.grad_buf(self);
    NumArray& gt = g.grad_buf(table);
    // Scatter-add stays serial: duplicate ids must accumulate in a fixed order.
    for (int64_t i = 0; i < n; ++i) {
      float* row = gt.data.data() + ids[static_cast<size_t>(i)] * d;
      const float* gr = gy.data.data() + i * d;
      for (int64_t j = 0; j < d; ++j) row[j] += gr[j];
    }
  };
  return push(std::move(out), back, "gather");
}

int Graph::add_weighted(const std::vector<int>& xs, const std::vector<float>& ws) {
  if (xs.empty() || xs.size() != ws.size())
    throw DimensionError("add_weighted: inputs and weights must be non-empty and equal-sized");
  for (size_t i = 1; i < xs.size(); ++i)
    require_same_shape(value(xs[0]), value(xs[i]), "add_weighted");

  // Zero-weight terms are dropped entirely so they cannot perturb the sum.
  std::vector<int> keep_x;
  std::vector<float> keep_w;
  for (size_t i = 0; i < xs.size(); ++i) {
    if (ws[i] != 0.0f) {
      keep_x.push_back(xs[i]);
      keep_w.push_back(ws[i]);
    }
  }

  NumArray out = NumArray::zeros(value(xs[0]).shape);
  const int64_t n = out.numel();
  if (keep_x.size() == 1 && keep_w[0] == 1.0f) {
    out.data = value(keep_x[0]).data;
  } else {
    for (size_t i = 0; i < keep_x.size(); ++i)
      kernels::axpy(n, keep_w[i], value(keep_x[i]).data.data(), out.data.data());
  }

  auto back = [keep_x, keep_w, n](Graph& g, int self) {
    const NumArray& gy = g.grad_buf(self);
    for (size_t i = 0; i < keep_x.size(); ++i)
      kernels::axpy(n, keep_w[i], gy.data.data(), g.grad_buf(keep_x[i]).data.data());
  };
  return push(std::move(out), back, "add_weighted");
}

int Graph::softmax_xent(int z, const std::vector<int64_t>& targets) {
  const NumArray& zv = value(z);
  if (zv.ndim() != 2) throw DimensionError("softmax_xent: expected z[n x C]");
  const int64_t n = zv.rows(), c = zv.cols();
  if (static_cast<int64_t>(targets.size()) != n)
    throw DimensionError("softmax_xent: target count does not match rows");
  for (int64_t t : targets)
    if (t < 0 || t >= c)
      throw DimensionError("softmax_xent: target out of range: " + std::to_string(t));

  auto probs = std::make_shared<NumArray>(NumArray::zeros({n, c}));
  float loss = 0.0f;
  kernels::softmax_xent_forward(n, c, zv.data.data(), targets.data(),
                                probs->data.data(), &loss);

  auto back = [z, targets, probs, n, c](Graph& g, int self) {
    const float gscale = g.grad_buf(self).item();
    kernels::softmax_xent_backward(n, c, probs->data.data(), targets.data(), gscale,
                                   g.grad_buf(z).data.data());
  };
  return push(NumArray::scalar(loss), back, "softmax_xent");
}

int Graph::reduce_dot(int x, NumArray weights) {
  const NumArray& xv = value(x);
  require_same_shape(xv, weights, "reduce_dot");
  double acc = 0.0;
  for (int64_t i = 0; i < xv.numel(); ++i)
    acc += static_cast<double>(xv.data[static_cast<size_t>(i)]) *
           static_cast<double>(weights.data[static_cast<size_t>(i)]);
  auto w = std::make_shared<NumArray>(std::move(weights));
  auto back = [x, w](Graph& g, int self) {
    const float gscale = g.grad_buf(self).item();
    kernels::axpy(w->numel(), gscale, w->data.data(), g.grad_buf(x).data.data());
  };
  return push(NumArray::scalar(static_cast<float>(acc)), back, "reduce_dot");
}

void Graph::backward(int root) {
  if (value(root).numel() != 1)
    throw DimensionError("backward: root must be a scalar node");
  grad_buf(root).data[0] = 1.0f;
  for (int i = root; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (n.touched && n.backward_fn) n.backward_fn(*this, i);
  }
}

void sgd_step(NumArray& param, const NumArray& grad, float lr) {
  require_same_shape(param, grad, "sgd_step");
  if (lr == 0.0f) return;
  kernels::axpy(param.numel(), -lr, grad.data.data(), param.data.data());
  check_finite(param, "sgd_step");
}

}  // namespace epd
