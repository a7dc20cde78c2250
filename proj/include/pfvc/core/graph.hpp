#pragma once

#include <functional>
#include <string>
#include <vector>

#include "pfvc/core/tensor.hpp"

namespace pfvc::core {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor t) : name(std::move(n)), value(std::move(t)) {
    grad = Tensor::zeros(value.shape);
  }
  void zero_grad() {
    for (auto& g : grad.v) g = 0.0;
  }
};

// Reverse-mode tape. A graph is built per forward pass; backward() walks the
// tape in reverse and accumulates gradients into bound Parameters. Node
// handles are plain ints. Single-threaded per graph; the heavy ops dispatch
// to the OpenMP kernels internally.
class Graph {
 public:
  int input(Tensor t);
  int param(Parameter& p);

  const Tensor& val(int id) const { return nodes_[id].val; }
  const Tensor& grad_of(int id) const { return nodes_[id].grad; }

  // elementwise; b may be same-shape, a row vector [1 x C], a column [T x 1],
  // or a scalar [1 x 1]
  int add(int a, int b);
  int sub(int a, int b);
  int mul(int a, int b);
  int div(int a, int b);

  int scale(int a, real s);
  int add_const(int a, real c);
  int clamp_min(int a, real lo);

  int matmul(int a, int b);
  int transpose(int a);
  int conv1d(int x, int w, int bias, int stride, int pad, int dil);  // bias -1 for none

  int softmax(int a);  // per row
  int layer_norm(int x, int gamma, int beta, real eps = 1e-5);
  int gelu(int a);
  int tanh_(int a);
  int sigmoid(int a);
  int exp_(int a);
  int log_(int a);
  int sqrt_(int a);
  int softplus(int a);

  int embedding(int table, const std::vector<int>& ids);
  int concat_cols(const std::vector<int>& parts);
  int concat_rows(const std::vector<int>& parts);
  int slice_rows(int a, int r0, int r1);
  int broadcast_rows(int a, int t);  // [1 x C] -> [T x C]

  int sum_all(int a);
  int mean_all(int a);

  // forward takes the constant tensor's values, backward passes the gradient
  // through to `a` unchanged
  int straight_through(int a, Tensor value);

  void backward(int loss);

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor val;
    Tensor grad;
    bool rg = false;
    std::function<void(Graph&, int)> back;  // (graph, own id)
  };

  std::vector<Node> nodes_;
  std::vector<std::pair<int, Parameter*>> bindings_;

  int push(Tensor val, bool rg, std::function<void(Graph&, int)> back);
  bool rg(int id) const { return nodes_[id].rg; }
  // null when the node does not require grad
  Tensor* gptr(int id) { return nodes_[id].rg ? &nodes_[id].grad : nullptr; }
};

}  // namespace pfvc::core
