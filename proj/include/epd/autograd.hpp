#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "epd/numarray.hpp"

namespace epd {

enum class BnMode { train, eval };

// One batch-norm branch: learnable scale/shift plus running statistics.
// The optimizer updates gamma/beta only; running stats move inside the
// train-mode forward pass.
struct BatchNormState {
  NumArray gamma, beta, running_mean, running_var;
  float momentum = 0.1f;
  float epsilon = 1e-5f;

  static BatchNormState init(int64_t channels);
  int64_t channels() const { return gamma.numel(); }
};

// Reverse-mode tape. Nodes are appended in evaluation order, so reverse
// insertion order is a valid topological order for the backward sweep.
// Forward outputs are checked for NaN/Inf after every op.
class Graph {
 public:
  int leaf(NumArray value);

  const NumArray& value(int id) const { return nodes_[static_cast<size_t>(id)].value; }
  // Zeros if the node never received gradient.
  const NumArray& grad(int id);

  // out[i,j] = sum_k x[i,k] W[k,j] + b[j]
  int affine(int x, int w, int b);
  // Feature-dim concat of 2-D arrays sharing the leading dim; backward splits
  // the gradient at the same offsets.
  int concat(const std::vector<int>& xs);
  int hadamard(int x, int y);
  int relu(int x);
  // Train mode normalizes with batch statistics and updates state.running_*;
  // eval mode reads them. gamma/beta enter as graph leaves so they get grads.
  int batchnorm(int x, int gamma, int beta, BatchNormState& state, BnMode mode);
  // Row gather; backward scatter-adds. Serves as the embedding lookup.
  int gather(int table, std::vector<int64_t> ids);
  // Elementwise weighted sum of same-shape arrays. Zero-weight terms are
  // dropped so a unit weight passes its input through bitwise.
  int add_weighted(const std::vector<int>& xs, const std::vector<float>& ws);
  // Mean over rows of -log softmax(z)[target].
  int softmax_xent(int z, const std::vector<int64_t>& targets);
  // Scalar projection sum(x * weights); gradient-check harness root.
  int reduce_dot(int x, NumArray weights);

  void backward(int root);

  int size() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    NumArray value;
    NumArray grad;
    bool touched = false;
    std::function<void(Graph&, int)> backward_fn;
  };

  int push(NumArray value, std::function<void(Graph&, int)> fn, const char* opname);
  NumArray& grad_buf(int id);

  std::vector<Node> nodes_;
};

// p <- p - lr * g, elementwise. lr == 0 leaves params bitwise untouched.
void sgd_step(NumArray& param, const NumArray& grad, float lr);

}  // namespace epd
