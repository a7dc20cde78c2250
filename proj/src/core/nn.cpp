#include "pfvc/core/nn.hpp"

#include <cmath>

namespace pfvc::core {

Tensor init_normal(const std::string& name, std::vector<int> shape, real stddev,
                   const Rng& base) {
  Rng rng = base.split(fnv1a(name.data(), name.size()));
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& x : t.v) x = stddev * rng.normal();
  return t;
}

Linear::Linear(const std::string& name, int in, int out, const Rng& rng, bool bias)
    : has_bias(bias) {
  w = Parameter(name + ".w", init_normal(name + ".w", {in, out},
                                         1.0 / std::sqrt(static_cast<real>(in)), rng));
  if (has_bias) b = Parameter(name + ".b", Tensor::zeros({1, out}));
}

int Linear::out(Graph& g, int x) {
  int y = g.matmul(x, g.param(w));
  return has_bias ? g.add(y, g.param(b)) : y;
}

Conv1d::Conv1d(const std::string& name, int c_in, int c_out, int kernel,
               const Rng& rng, int stride_, int pad_, int dil_)
    : stride(stride_), pad(pad_), dil(dil_) {
  if (pad < 0) pad = ((kernel - 1) * dil) / 2;
  real stddev = 1.0 / std::sqrt(static_cast<real>(kernel * c_in));
  w = Parameter(name + ".w", init_normal(name + ".w", {kernel, c_in, c_out}, stddev, rng));
  b = Parameter(name + ".b", Tensor::zeros({1, c_out}));
}

int Conv1d::out(Graph& g, int x) {
  int wid = g.param(w);
  int bid = g.param(b);
  return g.conv1d(x, wid, bid, stride, pad, dil);
}

LayerNorm::LayerNorm(const std::string& name, int dim) {
  gamma = Parameter(name + ".gamma", Tensor::full({1, dim}, 1.0));
  beta = Parameter(name + ".beta", Tensor::zeros({1, dim}));
}

int LayerNorm::out(Graph& g, int x) {
  int gid = g.param(gamma);
  int bid = g.param(beta);
  return g.layer_norm(x, gid, bid);
}

Embedding::Embedding(const std::string& name, int count, int dim, const Rng& rng) {
  table = Parameter(name + ".table", init_normal(name + ".table", {count, dim}, 0.05, rng));
}

int Embedding::out(Graph& g, const std::vector<int>& ids) {
  int tid = g.param(table);
  return g.embedding(tid, ids);
}

Attention::Attention(const std::string& name, int d_q, int d_kv, int d_model,
                     const Rng& rng)
    : wq(name + ".q", d_q, d_model, rng),
      wk(name + ".k", d_kv, d_model, rng, /*bias=*/false),
      wv(name + ".v", d_kv, d_model, rng),
      wo(name + ".o", d_model, d_q, rng),
      scale(1.0 / std::sqrt(static_cast<real>(d_model))) {}

int Attention::out(Graph& g, int q_in, int kv_in) {
  int q = wq.out(g, q_in);
  int k = wk.out(g, kv_in);
  int v = wv.out(g, kv_in);
  int scores = g.scale(g.matmul(q, g.transpose(k)), scale);
  int attn = g.softmax(scores);
  return wo.out(g, g.matmul(attn, v));
}

Tensor sinusoidal_embedding(real t, int dim, real max_period) {
  Tensor e = Tensor::zeros({1, dim});
  const int half = dim / 2;
  for (int i = 0; i < half; ++i) {
    real freq = std::exp(-std::log(max_period) * i / half);
    e(0, i) = std::sin(t * max_period * freq);
    e(0, half + i) = std::cos(t * max_period * freq);
  }
  return e;
}

int mse(Graph& g, int a, int b) {
  int d = g.sub(a, b);
  return g.mean_all(g.mul(d, d));
}

int masked_mse(Graph& g, int a, int b, const Tensor& w) {
  real wsum = 0.0;
  for (real x : w.v) wsum += x;
  if (wsum < 1.0) wsum = 1.0;
  int mask = g.input(w);
  int d = g.sub(a, b);
  return g.scale(g.sum_all(g.mul(g.mul(d, d), mask)), 1.0 / wsum);
}

}  // namespace pfvc::core
