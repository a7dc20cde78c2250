#include "pfvc/core/graph.hpp"

#include <cmath>
#include <stdexcept>

#include "pfvc/core/kernels.hpp"

namespace pfvc::core {

namespace {

constexpr real kInvSqrt2 = 0.7071067811865476;
constexpr real kInvSqrt2Pi = 0.3989422804014327;

enum class Bcast { kSame, kRow, kCol, kScalar };

Bcast bcast_kind(const Tensor& a, const Tensor& b, const char* op) {
  if (a.same_shape(b)) return Bcast::kSame;
  if (b.rows() == 1 && b.cols() == 1) return Bcast::kScalar;
  if (b.rows() == 1 && b.cols() == a.cols()) return Bcast::kRow;
  if (b.cols() == 1 && b.rows() == a.rows()) return Bcast::kCol;
  throw std::runtime_error(std::string(op) + ": incompatible shapes " +
                           a.shape_str() + " and " + b.shape_str());
}

real bval(const Tensor& b, Bcast k, int i, int j) {
  switch (k) {
    case Bcast::kSame: return b(i, j);
    case Bcast::kRow: return b(0, j);
    case Bcast::kCol: return b(i, 0);
    default: return b.v[0];
  }
}

void baccum(Tensor& gb, Bcast k, int i, int j, real g) {
  switch (k) {
    case Bcast::kSame: gb(i, j) += g; break;
    case Bcast::kRow: gb(0, j) += g; break;
    case Bcast::kCol: gb(i, 0) += g; break;
    default: gb.v[0] += g; break;
  }
}

}  // namespace

int Graph::push(Tensor val, bool requires_grad, std::function<void(Graph&, int)> back) {
#ifndef NDEBUG
  if (!val.all_finite())
    throw std::runtime_error("graph: non-finite value produced at node " +
                             std::to_string(nodes_.size()));
#endif
  nodes_.push_back(Node{std::move(val), Tensor{}, requires_grad, std::move(back)});
  return static_cast<int>(nodes_.size()) - 1;
}

int Graph::input(Tensor t) { return push(std::move(t), false, nullptr); }

int Graph::param(Parameter& p) {
  int id = push(p.value, true, nullptr);
  bindings_.emplace_back(id, &p);
  return id;
}

int Graph::add(int a, int b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  Bcast k = bcast_kind(ta, tb, "add");
  Tensor out = ta;
  for (int i = 0; i < out.rows(); ++i)
    for (int j = 0; j < out.cols(); ++j) out(i, j) += bval(tb, k, i, j);
  return push(std::move(out), rg(a) || rg(b), [a, b, k](Graph& g, int self) {
    const Tensor& go = g.grad_of(self);
    if (Tensor* ga = g.gptr(a))
      for (size_t i = 0; i < go.v.size(); ++i) ga->v[i] += go.v[i];
    if (Tensor* gb = g.gptr(b))
      for (int i = 0; i < go.rows(); ++i)
        for (int j = 0; j < go.cols(); ++j) baccum(*gb, k, i, j, go(i, j));
  });
}

int Graph::sub(int a, int b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  Bcast k = bcast_kind(ta, tb, "sub");
  Tensor out = ta;
  for (int i = 0; i < out.rows(); ++i)
    for (int j = 0; j < out.cols(); ++j) out(i, j) -= bval(tb, k, i, j);
  return push(std::move(out), rg(a) || rg(b), [a, b, k](Graph& g, int self) {
    const Tensor& go = g.grad_of(self);
    if (Tensor* ga = g.gptr(a))
      for (size_t i = 0; i < go.v.size(); ++i) ga->v[i] += go.v[i];
    if (Tensor* gb = g.gptr(b))
      for (int i = 0; i < go.rows(); ++i)
        for (int j = 0; j < go.cols(); ++j) baccum(*gb, k, i, j, -go(i, j));
  });
}

int Graph::mul(int a, int b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  Bcast k = bcast_kind(ta, tb, "mul");
  Tensor out = ta;
  for (int i = 0; i < out.rows(); ++i)
    for (int j = 0; j < out.cols(); ++j) out(i, j) *= bval(tb, k, i, j);
  return push(std::move(out), rg(a) || rg(b), [a, b, k](Graph& g, int self) {
    const Tensor& go = g.grad_of(self);
    const Tensor& ta = g.val(a);
    const Tensor& tb = g.val(b);
    if (Tensor* ga = g.gptr(a))
      for (int i = 0; i < go.rows(); ++i)
        for (int j = 0; j < go.cols(); ++j) (*ga)(i, j) += go(i, j) * bval(tb, k, i, j);
    if (Tensor* gb = g.gptr(b))
      for (int i = 0; i < go.rows(); ++i)
        for (int j = 0; j < go.cols(); ++j) baccum(*gb, k, i, j, go(i, j) * ta(i, j));
  });
}

int Graph::div(int a, int b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  Bcast k = bcast_kind(ta, tb, "div");
  Tensor out = ta;
  for (int i = 0; i < out.rows(); ++i)
    for (int j = 0; j < out.cols(); ++j) out(i, j) /= bval(tb, k, i, j);
  return push(std::move(out), rg(a) || rg(b), [a, b, k](Graph& g, int self) {
    const Tensor& go = g.grad_of(self);
    const Tensor& ta = g.val(a);
    const Tensor& tb = g.val(b);
    if (Tensor* ga = g.gptr(a))
      for (int i = 0; i < go.rows(); ++i)
        for (int j = 0; j < go.cols(); ++j) (*ga)(i, j) += go(i, j) / bval(tb, k, i, j);
    if (Tensor* gb = g.gptr(b))
      for (int i = 0; i < go.rows(); ++i)
        for (int j = 0; j < go.cols(); ++j) {
          real bv = bval(tb, k, i, j);
          baccum(*gb, k, i, j, -go(i, j) * ta(i, j) / (bv * bv));
        }
  });
}

int Graph::scale(int a, real s) {
  Tensor out = val(a);
  for (auto& x : out.v) x *= s;
  return push(std::move(out), rg(a), [a, s](Graph& g, int self) {
    const Tensor& go = g.grad_of(self);
    if (Tensor* ga = g.gptr(a))
      for (size_t i = 0; i < go.v.size(); ++i) ga->v[i] += s * go.v[i];
  });
}

int Graph::add_const(int a, real c) {
  Tensor out = val(a);
  for (auto& x : out.v) x += c;
  return push(std::move(out), rg(a), [a](Graph& g, int self) {
    const Tensor& go = g.grad_of(self);
    if (Tensor* ga = g.gptr(a))
      for (size_t i = 0; i < go.v.size(); ++i) ga->v[i] += go.v[i];
  });
}

int Graph::clamp_min(int a, real lo) {
  Tensor out = val(a);
  for (auto& x : out.v) x = x < lo ? lo : x;
  return push(std::move(out), rg(a), [a, lo](Graph& g, int self) {
    const Tensor& go = g.grad_of(self);
    const Tensor& ta = g.val(a);
    if (Tensor* ga = g.gptr(a))
      for (size_t i = 0; i < go.v.size(); ++i)
        if (ta.v[i] > lo) ga->v[i] += go.v[i];
  });
}

int Graph::matmul(int a, int b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (ta.cols() != tb.rows())
    throw std::runtime_error("matmul: shape mismatch " + ta.shape_str() +
                             " vs " + tb.shape_str());
  Tensor out = Tensor::zeros({ta.rows(), tb.cols()});
  kernels::matmul(ta.v.data(), tb.v.data(), out.v.data(), ta.rows(), ta.cols(),
                  tb.cols());
  return push(std::move(out), rg(a) || rg(b), [a, b](Graph& g, int self) {
    const Tensor& go = g.grad_of(self);
    const Tensor& ta = g.val(a);
    const Tensor& tb = g.val(b);
    const int m = ta.rows(), k = ta.cols(), n = tb.cols();
    if (Tensor* ga = g.gptr(a)) {
      Tensor tmp = Tensor::zeros({m, k});
      kernels::matmul_nt(go.v.data(), tb.v.data(), tmp.v.data(), m, n, k);
      for (size_t i = 0; i < tmp.v.size(); ++i) ga->v[i] += tmp.v[i];
    }
    if (Tensor* gb = g.gptr(b)) {
      Tensor tmp = Tensor::zeros({k, n});
      kernels::matmul_tn(ta.v.data(), go.v.data(), tmp.v.data(), k, m, n);
      for (size_t i = 0; i < tmp.v.size(); ++i) gb->v[i] += tmp.v[i];
    }
  });
}

int Graph::transpose(int a) {
  const Tensor& ta = val(a);
  Tensor out = Tensor::zeros({ta.cols(), ta.rows()});
  for (int i = 0; i < ta.rows(); ++i)
    for (int j = 0; j < ta.cols(); ++j) out(j, i) = ta(i, j);
  return push(std::move(out), rg(a), [a](Graph& g, int self) {
    const Tensor& go = g.grad_of(self);
    if (Tensor* ga = g.gptr(a))
      for (int i = 0; i < go.rows(); ++i)
        for (int j = 0; j < go.cols(); ++j) (*ga)(j, i) += go(i, j);
  });
}

int Graph::conv1d(int x, int w, int bias, int stride, int pad, int dil) {
  const Tensor& tx = val(x);
  const Tensor& tw = val(w);
  if (tw.rank() != 3)
    throw std::runtime_error("conv1d: weight must be rank 3, got " + tw.shape_str());
  const int kernel = tw.shape[0], c_in = tw.shape[1], c_out = tw.shape[2];
  if (tx.cols() != c_in)
    throw std::runtime_error("conv1d: input " + tx.shape_str() +
                             " does not match weight " + tw.shape_str());
  const int t_out = kernels::conv1d_out_len(tx.rows(), kernel, stride, pad, dil);
  Tensor out = Tensor::zeros({t_out, c_out});
  const real* bp = bias >= 0 ? val(bias).v.data() : nullptr;
  kernels::conv1d(tx.v.data(), tw.v.data(), bp, out.v.data(), tx.rows(), c_in,
                  c_out, kernel, stride, pad, dil);
  bool any_grad = rg(x) || rg(w) || (bias >= 0 && rg(bias));
  return push(std::move(out), any_grad,
              [x, w, bias, stride, pad, dil, kernel, c_in, c_out](Graph& g, int self) {
                const Tensor& go = g.grad_of(self);
                const Tensor& tx = g.val(x);
                if (Tensor* gx = g.gptr(x))
                  kernels::conv1d_grad_x(go.v.data(), g.val(w).v.data(), gx->v.data(),
                                         tx.rows(), c_in, c_out, kernel, stride, pad, dil);
                Tensor* gw = g.gptr(w);
                Tensor* gb = bias >= 0 ? g.gptr(bias) : nullptr;
                if (gw || gb) {
                  Tensor dummy;
                  if (!gw) {
                    dummy = Tensor::zeros({kernel, c_in, c_out});
                    gw = &dummy;
                  }
                  kernels::conv1d_grad_w(go.v.data(), tx.v.data(), gw->v.data(),
                                         gb ? gb->v.data() : nullptr, tx.rows(),
                                         c_in, c_out, kernel, stride, pad, dil);
                }
              });
}

int Graph::softmax(int a) {
  const Tensor& ta = val(a);
  Tensor out = ta;
  for (int i = 0; i < out.rows(); ++i) {
    real mx = out(i, 0);
    for (int j = 1; j < out.cols(); ++j) mx = std::max(mx, out(i, j));
    real s = 0.0;
    for (int j = 0; j < out.cols(); ++j) {
      out(i, j) = std::exp(out(i, j) - mx);
      s += out(i, j);
    }
    for (int j = 0; j < out.cols(); ++j) out(i, j) /= s;
  }
  return push(std::move(out), rg(a), [a](Graph& g, int self) {
    const Tensor& go = g.grad_of(self);
    const Tensor& y = g.val(self);
    if (Tensor* ga = g.gptr(a))
      for (int i = 0; i < y.rows(); ++i) {
        real dot = 0.0;
        for (int j = 0; j < y.cols(); ++j) dot += go(i, j) * y(i, j);
        for (int j = 0; j < y.cols(); ++j)
          (*ga)(i, j) += y(i, j) * (go(i, j) - dot);
      }
  });
}

int Graph::layer_norm(int x, int gamma, int beta, real eps) {
  const Tensor& tx = val(x);
  const int c = tx.cols();
  if (val(gamma).cols() != c || val(beta).cols() != c)
    throw std::runtime_error("layer_norm: affine shape " + val(gamma).shape_str() +
                             " does not match input " + tx.shape_str());
  Tensor xhat = Tensor::zeros(tx.shape);
  Tensor inv_std = Tensor::zeros({tx.rows(), 1});
  Tensor out = Tensor::zeros(tx.shape);
  const Tensor& tg = val(gamma);
  const Tensor& tb = val(beta);
  for (int i = 0; i < tx.rows(); ++i) {
    real mu = 0.0;
    for (int j = 0; j < c; ++j) mu += tx(i, j);
    mu /= c;
    real var = 0.0;
    for (int j = 0; j < c; ++j) {
      real d = tx(i, j) - mu;
      var += d * d;
    }
    var /= c;
    real inv = 1.0 / std::sqrt(var + eps);
    inv_std(i, 0) = inv;
    for (int j = 0; j < c; ++j) {
      xhat(i, j) = (tx(i, j) - mu) * inv;
      out(i, j) = xhat(i, j) * tg(0, j) + tb(0, j);
    }
  }
  return push(std::move(out), rg(x) || rg(gamma) || rg(beta),
              [x, gamma, beta, c, xhat = std::move(xhat),
               inv_std = std::move(inv_std)](Graph& g, int self) {
                const Tensor& go = g.grad_of(self);
                const Tensor& tg = g.val(gamma);
                Tensor* gx = g.gptr(x);
                Tensor* gg = g.gptr(gamma);
                Tensor* gb = g.gptr(beta);
                for (int i = 0; i < go.rows(); ++i) {
                  if (gg || gb)
                    for (int j = 0; j < c; ++j) {
                      if (gg) (*gg)(0, j) += go(i, j) * xhat(i, j);
                      if (gb) (*gb)(0, j) += go(i, j);
                    }
                  if (gx) {
                    real sum_d = 0.0, sum_dx = 0.0;
                    for (int j = 0; j < c; ++j) {
                      real d = go(i, j) * tg(0, j);
                      sum_d += d;
                      sum_dx += d * xhat(i, j);
                    }
                    const real inv = inv_std(i, 0);
                    for (int j = 0; j < c; ++j) {
                      real d = go(i, j) * tg(0, j);
                      (*gx)(i, j) +=
                          inv * (d - sum_d / c - xhat(i, j) * sum_dx / c);
                    }
                  }
                }
              });
}

int Graph::gelu(int a) {
  Tensor out = val(a);
  for (auto& x : out.v) x = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
  return push(std::move(out), rg(a), [a](Graph& g, int self) {
    const Tensor& go = g.grad_of(self);
    const Tensor& ta = g.val(a);
    if (Tensor* ga = g.gptr(a))
      for (size_t i = 0; i < go.v.size(); ++i) {
        const real x = ta.v[i];
        const real cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
        const real pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
        ga->v[i] += go.v[i] * (cdf + x * pdf);
      }
  });
}

int Graph::tanh_(int a) {
  Tensor out = val(a);
  for (auto& x : out.v) x = std::tanh(x);
  return push(std::move(out), rg(a), [a](Graph& g, int self) {
    const Tensor& go = g.grad_of(self);
    const Tensor& y = g.val(self);
    if (Tensor* ga = g.gptr(a))
      for (size_t i = 0; i < go.v.size(); ++i)
        ga->v[i] += go.v[i] * (1.0 - y.v[i] * y.v[i]);
  });
}

int Graph::sigmoid(int a) {
  Tensor out = val(a);
  for (auto& x : out.v) x = 1.0 / (1.0 + std::exp(-x));
  return push(std::move(out), rg(a), [a](Graph& g, int self) {
    const Tensor& go = g.grad_of(self);
    const Tensor& y = g.val(self);
    if (Tensor* ga = g.gptr(a))
      for (size_t i = 0; i < go.v.size(); ++i)
        ga->v[i] += go.v[i] * y.v[i] * (1.0 - y.v[i]);
  });
}

int Graph::exp_(int a) {
  Tensor out = val(a);
  for (auto& x : out.v) x = std::exp(x);
  return push(std::move(out), rg(a), [a](Graph& g, int self) {
    const Tensor& go = g.grad_of(self);
    const Tensor& y = g.val(self);
    if (Tensor* ga = g.gptr(a))
      for (size_t i = 0; i < go.v.size(); ++i) ga->v[i] += go.v[i] * y.v[i];
  });
}

int Graph::log_(int a) {
  Tensor out = val(a);
  for (auto& x : out.v) x = std::log(x);
  return push(std::move(out), rg(a), [a](Graph& g, int self) {
    const Tensor& go = g.grad_of(self);
    const Tensor& ta = g.val(a);
    if (Tensor* ga = g.gptr(a))
      for (size_t i = 0; i < go.v.size(); ++i) ga->v[i] += go.v[i] / ta.v[i];
  });
}

int Graph::sqrt_(int a) {
  Tensor out = val(a);
  for (auto& x : out.v) x = std::sqrt(x);
  return push(std::move(out), rg(a), [a](Graph& g, int self) {
    const Tensor& go = g.grad_of(self);
    const Tensor& y = g.val(self);
    if (Tensor* ga = g.gptr(a))
      for (size_t i = 0; i < go.v.size(); ++i)
        ga->v[i] += go.v[i] * 0.5 / y.v[i];
  });
}

int Graph::softplus(int a) {
  Tensor out = val(a);
  for (auto& x : out.v) {
    if (x > 30.0) continue;
    x = x < -30.0 ? std::exp(x) : std::log1p(std::exp(x));
  }
  return push(std::move(out), rg(a), [a](Graph& g, int self) {
    const Tensor& go = g.grad_of(self);
    const Tensor& ta = g.val(a);
    if (Tensor* ga = g.gptr(a))
      for (size_t i = 0; i < go.v.size(); ++i)
        ga->v[i] += go.v[i] / (1.0 + std::exp(-ta.v[i]));
  });
}

int Graph::embedding(int table, const std::vector<int>& ids) {
  const Tensor& tt = val(table);
  const int c = tt.cols();
  Tensor out = Tensor::zeros({static_cast<int>(ids.size()), c});
  for (size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= tt.rows())
      throw std::runtime_error("embedding: id " + std::to_string(ids[i]) +
                               " out of range for table " + tt.shape_str());
    for (int j = 0; j < c; ++j) out(static_cast<int>(i), j) = tt(ids[i], j);
  }
  return push(std::move(out), rg(table), [table, ids, c](Graph& g, int self) {
    const Tensor& go = g.grad_of(self);
    if (Tensor* gt = g.gptr(table))
      for (size_t i = 0; i < ids.size(); ++i)
        for (int j = 0; j < c; ++j)
          (*gt)(ids[i], j) += go(static_cast<int>(i), j);
  });
}

int Graph::concat_cols(const std::vector<int>& parts) {
  int rows = val(parts[0]).rows();
  int cols = 0;
  bool any_grad = false;
  for (int p : parts) {
    if (val(p).rows() != rows)
      throw std::runtime_error("concat_cols: row mismatch " +
                               val(parts[0]).shape_str() + " vs " + val(p).shape_str());
    cols += val(p).cols();
    any_grad = any_grad || rg(p);
  }
  Tensor out = Tensor::zeros({rows, cols});
  int off = 0;
  for (int p : parts) {
    const Tensor& tp = val(p);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < tp.cols(); ++j) out(i, off + j) = tp(i, j);
    off += tp.cols();
  }
  return push(std::move(out), any_grad, [parts](Graph& g, int self) {
    const Tensor& go = g.grad_of(self);
    int off = 0;
    for (int p : parts) {
      const int pc = g.val(p).cols();
      if (Tensor* gp = g.gptr(p))
        for (int i = 0; i < go.rows(); ++i)
          for (int j = 0; j < pc; ++j) (*gp)(i, j) += go(i, off + j);
      off += pc;
    }
  });
}

int Graph::concat_rows(const std::vector<int>& parts) {
  int cols = val(parts[0]).cols();
  int rows = 0;
  bool any_grad = false;
  for (int p : parts) {
    if (val(p).cols() != cols)
      throw std::runtime_error("concat_rows: col mismatch " +
                               val(parts[0]).shape_str() + " vs " + val(p).shape_str());
    rows += val(p).rows();
    any_grad = any_grad || rg(p);
  }
  Tensor out = Tensor::zeros({rows, cols});
  int off = 0;
  for (int p : parts) {
    const Tensor& tp = val(p);
    for (int i = 0; i < tp.rows(); ++i)
      for (int j = 0; j < cols; ++j) out(off + i, j) = tp(i, j);
    off += tp.rows();
  }
  return push(std::move(out), any_grad, [parts](Graph& g, int self) {
    const Tensor& go = g.grad_of(self);
    int off = 0;
    for (int p : parts) {
      const int pr = g.val(p).rows();
      if (Tensor* gp = g.gptr(p))
        for (int i = 0; i < pr; ++i)
          for (int j = 0; j < go.cols(); ++j) (*gp)(i, j) += go(off + i, j);
      off += pr;
    }
  });
}

int Graph::slice_rows(int a, int r0, int r1) {
  const Tensor& ta = val(a);
  if (r0 < 0 || r1 > ta.rows() || r0 > r1)
    throw std::runtime_error("slice_rows: bad range on " + ta.shape_str());
  Tensor out = Tensor::zeros({r1 - r0, ta.cols()});
  for (int i = r0; i < r1; ++i)
    for (int j = 0; j < ta.cols(); ++j) out(i - r0, j) = ta(i, j);
  return push(std::move(out), rg(a), [a, r0](Graph& g, int self) {
    const Tensor& go = g.grad_of(self);
    if (Tensor* ga = g.gptr(a))
      for (int i = 0; i < go.rows(); ++i)
        for (int j = 0; j < go.cols(); ++j) (*ga)(r0 + i, j) += go(i, j);
  });
}

int Graph::broadcast_rows(int a, int t) {
  const Tensor& ta = val(a);
  if (ta.rows() != 1)
    throw std::runtime_error("broadcast_rows: expected [1 x C], got " + ta.shape_str());
  Tensor out = Tensor::zeros({t, ta.cols()});
  for (int i = 0; i < t; ++i)
    for (int j = 0; j < ta.cols(); ++j) out(i, j) = ta(0, j);
  return push(std::move(out), rg(a), [a](Graph& g, int self) {
    const Tensor& go = g.grad_of(self);
    if (Tensor* ga = g.gptr(a))
      for (int i = 0; i < go.rows(); ++i)
        for (int j = 0; j < go.cols(); ++j) (*ga)(0, j) += go(i, j);
  });
}

int Graph::sum_all(int a) {
  real s = 0.0;
  for (real x : val(a).v) s += x;
  return push(Tensor::scalar(s), rg(a), [a](Graph& g, int self) {
    const real go = g.grad_of(self).v[0];
    if (Tensor* ga = g.gptr(a))
      for (auto& x : ga->v) x += go;
  });
}

int Graph::mean_all(int a) {
  real s = 0.0;
  for (real x : val(a).v) s += x;
  const int n = val(a).numel();
  return push(Tensor::scalar(s / n), rg(a), [a, n](Graph& g, int self) {
    const real go = g.grad_of(self).v[0] / n;
    if (Tensor* ga = g.gptr(a))
      for (auto& x : ga->v) x += go;
  });
}

int Graph::straight_through(int a, Tensor value) {
  if (!val(a).same_shape(value))
    throw std::runtime_error("straight_through: shape mismatch " +
                             val(a).shape_str() + " vs " + value.shape_str());
  return push(std::move(value), rg(a), [a](Graph& g, int self) {
    const Tensor& go = g.grad_of(self);
    if (Tensor* ga = g.gptr(a))
      for (size_t i = 0; i < go.v.size(); ++i) ga->v[i] += go.v[i];
  });
}

void Graph::backward(int loss) {
  if (val(loss).numel() != 1)
    throw std::runtime_error("backward: loss must be scalar, got " +
                             val(loss).shape_str());
  for (auto& n : nodes_)
    if (n.rg) n.grad = Tensor::zeros(n.val.shape);
  if (!nodes_[loss].rg) return;
  nodes_[loss].grad.v[0] = 1.0;
  for (int id = loss; id >= 0; --id) {
    auto& n = nodes_[id];
    if (n.rg && n.back) n.back(*this, id);
  }
  for (auto& [id, p] : bindings_) {
    const Tensor& g = nodes_[id].grad;
    for (size_t i = 0; i < g.v.size(); ++i) p->grad.v[i] += g.v[i];
  }
}

}  // namespace pfvc::core
