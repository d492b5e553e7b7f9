#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "avatar/tensor.hpp"

namespace avatar::ad {

// Tape-based reverse-mode autodiff over Tensor. Nodes are created in
// topological order; backward walks the tape in reverse. Leaf nodes view
// external parameter tensors (non-owning), so one parameter set can feed
// many concurrent graphs; each graph accumulates leaf gradients privately.
class Graph {
 public:
  explicit Graph(bool grad_enabled = true) : grad_(grad_enabled) {}

  // Leaf viewing an external parameter tensor. param_id tags the gradient
  // for collection after backward().
  int leaf(const Tensor* value, int param_id);
  // Constant input (no gradient tracked).
  int input(Tensor value);

  int matmul(int a, int b);     // A*B
  int matmul_nt(int a, int b);  // A*B^T
  int add(int a, int b);
  int sub(int a, int b);
  int add_rowvec(int a, int bias);  // bias is 1 x cols, broadcast over rows
  int scale(int a, double s);
  int relu(int a);
  int tanh_(int a);
  // Row-wise softmax; causal=true masks column j > row i (square input).
  int softmax_rows(int a, bool causal);
  int layernorm_rows(int x, int gain, int bias, double eps = 1e-5);
  int rows_gather(int table, std::vector<int> ids);
  int slice_cols(int a, int c0, int c1);
  int concat_cols(const std::vector<int>& parts);
  int mean_rows(int a);
  // Sum over rows of -log softmax(logits_row)[target_row]; 1x1 output.
  int cross_entropy_sum(int logits, std::vector<int> targets);

  const Tensor& value(int node) const {
    const Node& n = nodes_[node];
    return n.ext ? *n.ext : n.owned;
  }
  const Tensor& grad(int node) const { return nodes_[node].grad; }

  // Seed d(out)/d(out) = seed and propagate. Call once per graph.
  void backward(int out, const Tensor& seed);
  void backward_scalar(int out, double seed = 1.0);

  // Visit (param_id, grad) for every leaf that received gradient.
  void for_each_leaf_grad(const std::function<void(int, const Tensor&)>& fn) const;

  bool grad_enabled() const { return grad_; }

 private:
  struct Node {
    Tensor owned;
    const Tensor* ext = nullptr;  // set for leaves viewing external parameters
    Tensor grad;
    int param_id = -1;
    std::function<void(Graph&)> back;
  };

  int push(Tensor value, std::function<void(Graph&)> back);
  Tensor& grad_buf(int node);

  std::vector<Node> nodes_;
  bool grad_ = true;
};

}  // namespace avatar::ad
