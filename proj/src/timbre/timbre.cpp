#include "pfvc/timbre/timbre.hpp"

#include <cmath>
#include <stdexcept>

namespace pfvc::timbre {

TimbreEncoder::TimbreEncoder(const TimbreConfig& c, const Rng& rng) : cfg(c) {
  const int d = cfg.d_model;
  in_proj_ = core::Linear("timbre.in", cfg.n_mels, d, rng);
  c1_ = core::Conv1d("timbre.conv1", d, d, 3, rng, 1, -1, 1);
  c2_ = core::Conv1d("timbre.conv2", d, d, 3, rng, 1, -1, 2);
  c3_ = core::Conv1d("timbre.conv3", d, d, 3, rng, 1, -1, 3);
  mfa_ = core::Linear("timbre.mfa", 3 * d, d, rng);
  queries_ = Parameter("timbre.queries",
                       core::init_normal("timbre.queries", {cfg.n_tokens, d}, 0.3, rng));
  tok_k_ = core::Linear("timbre.tok_k", d, d, rng, /*bias=*/false);
  tok_v_ = core::Linear("timbre.tok_v", d, d, rng);
  asp_h_ = core::Linear("timbre.asp_h", d, d / 2, rng);
  asp_s_ = core::Linear("timbre.asp_s", d / 2, 1, rng);
  spk_out_ = core::Linear("timbre.spk_out", 2 * d, cfg.d_spk, rng);
}

int TimbreEncoder::feature_encoder(Graph& g, int mel) {
  int h = g.gelu(in_proj_.out(g, mel));
  int h1 = g.add(h, g.gelu(c1_.out(g, h)));
  int h2 = g.add(h1, g.gelu(c2_.out(g, h1)));
  int h3 = g.add(h2, g.gelu(c3_.out(g, h2)));
  return mfa_.out(g, g.concat_cols({h1, h2, h3}));
}

int TimbreEncoder::extract_tokens(Graph& g, int hidden) {
  if (g.val(hidden).rows() < 1)
    throw std::runtime_error("extract_tokens: empty hidden sequence");
  int q = g.param(queries_);
  int k = tok_k_.out(g, hidden);
  int v = tok_v_.out(g, hidden);
  int scores = g.scale(g.matmul(q, g.transpose(k)),
                       1.0 / std::sqrt(static_cast<real>(cfg.d_model)));
  int attn = g.softmax(scores);  // [n_tokens x T], rows sum to 1
  return g.matmul(attn, v);
}

int TimbreEncoder::global_embedding(Graph& g, int hidden) {
  const int t = g.val(hidden).rows();
  // per-frame scores -> attention weights over time
  int s = asp_s_.out(g, g.tanh_(asp_h_.out(g, hidden)));  // [T x 1]
  int w = g.transpose(g.softmax(g.transpose(s)));         // [T x 1], sums to 1
  int wt = g.transpose(w);                                // [1 x T]
  int mu = g.matmul(wt, hidden);                          // [1 x d]
  int m2 = g.matmul(wt, g.mul(hidden, hidden));
  int var = g.clamp_min(g.sub(m2, g.mul(mu, mu)), 1e-5);
  int sigma = g.sqrt_(var);
  int e = spk_out_.out(g, g.concat_cols({mu, sigma}));
  int norm = g.sqrt_(g.add_const(g.sum_all(g.mul(e, e)), 1e-12));
  (void)t;
  return g.div(e, norm);
}

std::vector<Parameter*> TimbreEncoder::params() {
  std::vector<Parameter*> ps;
  in_proj_.params(ps);
  c1_.params(ps);
  c2_.params(ps);
  c3_.params(ps);
  mfa_.params(ps);
  if (cfg.use_tokens) {
    ps.push_back(&queries_);
    tok_k_.params(ps);
    tok_v_.params(ps);
  }
  asp_h_.params(ps);
  asp_s_.params(ps);
  spk_out_.params(ps);
  return ps;
}

void TimbreEncoder::save_into(core::Checkpoint& ck) const {
  for (const core::Linear* l : {&in_proj_, &mfa_, &tok_k_, &tok_v_, &asp_h_, &asp_s_, &spk_out_}) {
    ck.put(l->w.name, l->w.value);
    if (l->has_bias) ck.put(l->b.name, l->b.value);
  }
  for (const core::Conv1d* l : {&c1_, &c2_, &c3_}) {
    ck.put(l->w.name, l->w.value);
    ck.put(l->b.name, l->b.value);
  }
  ck.put(queries_.name, queries_.value);
}

void TimbreEncoder::load_from(const core::Checkpoint& ck) {
  for (core::Linear* l : {&in_proj_, &mfa_, &tok_k_, &tok_v_, &asp_h_, &asp_s_, &spk_out_}) {
    l->w.value = ck.require(l->w.name);
    if (l->has_bias) l->b.value = ck.require(l->b.name);
  }
  for (core::Conv1d* l : {&c1_, &c2_, &c3_}) {
    l->w.value = ck.require(l->w.name);
    l->b.value = ck.require(l->b.name);
  }
  queries_.value = ck.require(queries_.name);
}

}  // namespace pfvc::timbre
