#pragma once

#include <string>
#include <vector>

#include "pfvc/core/graph.hpp"
#include "pfvc/core/rng.hpp"

namespace pfvc::core {

// Parameter init streams are derived from the parameter name, so layout
// changes elsewhere in a model never shift another layer's init.
Tensor init_normal(const std::string& name, std::vector<int> shape, real stddev,
                   const Rng& base);

struct Linear {
  Parameter w, b;
  bool has_bias = true;

  Linear() = default;
  Linear(const std::string& name, int in, int out, const Rng& rng, bool bias = true);
  int out(Graph& g, int x);
  void params(std::vector<Parameter*>& ps) {
    ps.push_back(&w);
    if (has_bias) ps.push_back(&b);
  }
};

struct Conv1d {
  Parameter w, b;
  int stride = 1, pad = 0, dil = 1;

  Conv1d() = default;
  // pad < 0 selects "same" padding for stride 1
  Conv1d(const std::string& name, int c_in, int c_out, int kernel, const Rng& rng,
         int stride = 1, int pad = -1, int dil = 1);
  int out(Graph& g, int x);
  void params(std::vector<Parameter*>& ps) {
    ps.push_back(&w);
    ps.push_back(&b);
  }
};

struct LayerNorm {
  Parameter gamma, beta;

  LayerNorm() = default;
  LayerNorm(const std::string& name, int dim);
  int out(Graph& g, int x);
  void params(std::vector<Parameter*>& ps) {
    ps.push_back(&gamma);
    ps.push_back(&beta);
  }
};

struct Embedding {
  Parameter table;

  Embedding() = default;
  Embedding(const std::string& name, int count, int dim, const Rng& rng);
  int out(Graph& g, const std::vector<int>& ids);
  void params(std::vector<Parameter*>& ps) { ps.push_back(&table); }
};

// Single-head scaled dot-product attention with q/k/v/output projections.
struct Attention {
  Linear wq, wk, wv, wo;
  real scale = 1.0;

  Attention() = default;
  Attention(const std::string& name, int d_q, int d_kv, int d_model, const Rng& rng);
  int out(Graph& g, int q_in, int kv_in);
  void params(std::vector<Parameter*>& ps) {
    wq.params(ps);
    wk.params(ps);
    wv.params(ps);
    wo.params(ps);
  }
};

// [1 x dim] sinusoidal embedding of a scalar position/time
Tensor sinusoidal_embedding(real t, int dim, real max_period = 10000.0);

// mean((a-b)^2) over all elements
int mse(Graph& g, int a, int b);
// sum(w * (a-b)^2) / max(sum(w), 1); w is a constant mask tensor
int masked_mse(Graph& g, int a, int b, const Tensor& w);

}  // namespace pfvc::core
