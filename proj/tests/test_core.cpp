#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "pfvc/core/checkpoint.hpp"
#include "pfvc/core/gradcheck.hpp"
#include "pfvc/core/graph.hpp"
#include "pfvc/core/kernels.hpp"
#include "pfvc/core/nn.hpp"
#include "pfvc/core/optim.hpp"
#include "pfvc/core/rng.hpp"

using namespace pfvc;
using namespace pfvc::core;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, real lo = -1.0, real hi = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& x : t.v) x = rng.uniform(lo, hi);
  return t;
}

// Runs gradcheck on a single-parameter loss built by `body`.
bool op_gradchecks(const char* name, Tensor init,
                   const std::function<int(Graph&, int)>& body, real rtol = 1e-4) {
  Parameter p(name, std::move(init));
  auto loss = [&](bool with_grad) {
    Graph g;
    int pid = g.param(p);
    int out = body(g, pid);
    // squash to scalar through a fixed weighting so every output entry matters
    Tensor wgt = Tensor::zeros(g.val(out).shape);
    Rng wr(123);
    for (auto& x : wgt.v) x = wr.uniform(-1.0, 1.0);
    int l = g.sum_all(g.mul(out, g.input(wgt)));
    if (with_grad) {
      p.zero_grad();
      g.backward(l);
    }
    return g.val(l).v[0];
  };
  auto report = gradcheck({&p}, loss, rtol, 40, 7);
  if (!report.pass) MESSAGE(report.summary());
  return report.pass;
}

}  // namespace

TEST_CASE("kernels: omp variants match serial reference bit-exactly") {
  Rng rng(42);
  for (int rep = 0; rep < 5; ++rep) {
    int m = rng.uniform_int(1, 40), k = rng.uniform_int(1, 40), n = rng.uniform_int(1, 40);
    Tensor a = random_tensor({m, k}, rng), b = random_tensor({k, n}, rng);
    Tensor c1 = Tensor::zeros({m, n}), c2 = Tensor::zeros({m, n});
    kernels::matmul(a.v.data(), b.v.data(), c1.v.data(), m, k, n);
    kernels::matmul_serial(a.v.data(), b.v.data(), c2.v.data(), m, k, n);
    CHECK(c1.v == c2.v);

    Tensor bt = random_tensor({n, k}, rng);
    kernels::matmul_nt(a.v.data(), bt.v.data(), c1.v.data(), m, k, n);
    kernels::matmul_nt_serial(a.v.data(), bt.v.data(), c2.v.data(), m, k, n);
    CHECK(c1.v == c2.v);

    Tensor at = random_tensor({k, m}, rng);
    kernels::matmul_tn(at.v.data(), b.v.data(), c1.v.data(), m, k, n);
    kernels::matmul_tn_serial(at.v.data(), b.v.data(), c2.v.data(), m, k, n);
    CHECK(c1.v == c2.v);
  }
  for (int rep = 0; rep < 5; ++rep) {
    int t = rng.uniform_int(4, 50), ci = rng.uniform_int(1, 8), co = rng.uniform_int(1, 8);
    int kk = rng.uniform_int(1, 5), stride = rng.uniform_int(1, 2), dil = rng.uniform_int(1, 3);
    int pad = rng.uniform_int(0, 4);
    Tensor x = random_tensor({t, ci}, rng), w = random_tensor({kk, ci, co}, rng);
    Tensor bias = random_tensor({1, co}, rng);
    int to = kernels::conv1d_out_len(t, kk, stride, pad, dil);
    if (to <= 0) continue;
    Tensor y1 = Tensor::zeros({to, co}), y2 = Tensor::zeros({to, co});
    kernels::conv1d(x.v.data(), w.v.data(), bias.v.data(), y1.v.data(), t, ci, co, kk, stride, pad, dil);
    kernels::conv1d_serial(x.v.data(), w.v.data(), bias.v.data(), y2.v.data(), t, ci, co, kk, stride, pad, dil);
    CHECK(y1.v == y2.v);
  }
}

TEST_CASE("matmul identity") {
  Rng rng(1);
  Tensor a = random_tensor({5, 4}, rng);
  Tensor eye = Tensor::zeros({4, 4});
  for (int i = 0; i < 4; ++i) eye(i, i) = 1.0;
  Graph g;
  int out = g.matmul(g.input(a), g.input(eye));
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 4; ++j) CHECK(g.val(out)(i, j) == doctest::Approx(a(i, j)));
}

TEST_CASE("softmax of constant vector is uniform; rows sum to one") {
  Graph g;
  int s = g.softmax(g.input(Tensor::full({3, 8}, 0.37)));
  for (int i = 0; i < 3; ++i) {
    real sum = 0.0;
    for (int j = 0; j < 8; ++j) {
      CHECK(g.val(s)(i, j) == doctest::Approx(0.125).epsilon(1e-12));
      CHECK(g.val(s)(i, j) >= 0.0);
      sum += g.val(s)(i, j);
    }
    CHECK(std::fabs(sum - 1.0) <= 1e-9);
  }
}

TEST_CASE("layer_norm normalizes rows before affine") {
  Rng rng(3);
  Tensor x = random_tensor({6, 32}, rng, -3.0, 5.0);
  LayerNorm ln("ln", 32);
  Graph g;
  int out = ln.out(g, g.input(x));
  for (int i = 0; i < 6; ++i) {
    real mean = 0.0, var = 0.0;
    for (int j = 0; j < 32; ++j) mean += g.val(out)(i, j);
    mean /= 32;
    for (int j = 0; j < 32; ++j) {
      real d = g.val(out)(i, j) - mean;
      var += d * d;
    }
    var /= 32;
    CHECK(std::fabs(mean) <= 1e-6);
    CHECK(std::fabs(var - 1.0) <= 1e-4);
  }
}

TEST_CASE("backward: linear and quadratic analytic cases") {
  Rng rng(5);
  Parameter p("p", random_tensor({3, 4}, rng));

  Graph g1;
  int l1 = g1.sum_all(g1.param(p));
  p.zero_grad();
  g1.backward(l1);
  for (real gv : p.grad.v) CHECK(gv == doctest::Approx(1.0));

  Graph g2;
  int pid = g2.param(p);
  int l2 = g2.scale(g2.sum_all(g2.mul(pid, pid)), 0.5);
  p.zero_grad();
  g2.backward(l2);
  for (size_t i = 0; i < p.grad.v.size(); ++i)
    CHECK(p.grad.v[i] == doctest::Approx(p.value.v[i]));
}

TEST_CASE("backward rejects non-scalar loss") {
  Graph g;
  int x = g.input(Tensor::zeros({2, 2}));
  CHECK_THROWS_WITH_AS(g.backward(x), doctest::Contains("scalar"), std::runtime_error);
}

TEST_CASE("shape mismatch errors name both shapes") {
  Graph g;
  int a = g.input(Tensor::zeros({2, 3}));
  int b = g.input(Tensor::zeros({4, 5}));
  CHECK_THROWS_WITH_AS(g.add(a, b), doctest::Contains("[2 x 3]"), std::runtime_error);
  CHECK_THROWS_WITH_AS(g.matmul(a, b), doctest::Contains("[4 x 5]"), std::runtime_error);
}

TEST_CASE("gradcheck every op on randomized shapes") {
  Rng rng(11);
  const Tensor base = random_tensor({5, 7}, rng);
  const Tensor pos = random_tensor({5, 7}, rng, 0.5, 1.5);

  const Tensor other = random_tensor({5, 7}, rng);
  CHECK(op_gradchecks("add.same", base, [&](Graph& g, int p) {
    return g.add(p, g.input(other));
  }));
  CHECK(op_gradchecks("add.row_bcast", Tensor(random_tensor({1, 7}, rng)), [&](Graph& g, int p) {
    return g.add(g.input(base), p);
  }));
  CHECK(op_gradchecks("sub.col_bcast", Tensor(random_tensor({5, 1}, rng)), [&](Graph& g, int p) {
    return g.sub(g.input(base), p);
  }));
  CHECK(op_gradchecks("mul.scalar_bcast", Tensor(random_tensor({1, 1}, rng)), [&](Graph& g, int p) {
    return g.mul(g.input(base), p);
  }));
  CHECK(op_gradchecks("mul.same", base, [&](Graph& g, int p) {
    return g.mul(p, g.input(other));
  }));
  CHECK(op_gradchecks("div.denominator", pos, [&](Graph& g, int p) {
    return g.div(g.input(base), p);
  }));
  CHECK(op_gradchecks("scale_addconst", base, [&](Graph& g, int p) {
    return g.add_const(g.scale(p, -2.5), 0.3);
  }));
  CHECK(op_gradchecks("clamp_min", pos, [&](Graph& g, int p) {
    return g.clamp_min(p, 1e-3);
  }));
  const Tensor rhs74 = random_tensor({7, 4}, rng);
  CHECK(op_gradchecks("matmul.lhs", base, [&](Graph& g, int p) {
    return g.matmul(p, g.input(rhs74));
  }));
  const Tensor lhs65 = random_tensor({6, 5}, rng);
  CHECK(op_gradchecks("matmul.rhs", base, [&](Graph& g, int p) {
    return g.matmul(g.input(lhs65), p);
  }));
  CHECK(op_gradchecks("transpose", base, [&](Graph& g, int p) { return g.transpose(p); }));
  CHECK(op_gradchecks("softmax", base, [&](Graph& g, int p) { return g.softmax(p); }));
  CHECK(op_gradchecks("gelu", base, [&](Graph& g, int p) { return g.gelu(p); }));
  CHECK(op_gradchecks("tanh", base, [&](Graph& g, int p) { return g.tanh_(p); }));
  CHECK(op_gradchecks("sigmoid", base, [&](Graph& g, int p) { return g.sigmoid(p); }));
  CHECK(op_gradchecks("exp", base, [&](Graph& g, int p) { return g.exp_(p); }));
  CHECK(op_gradchecks("log", pos, [&](Graph& g, int p) { return g.log_(p); }));
  CHECK(op_gradchecks("sqrt", pos, [&](Graph& g, int p) { return g.sqrt_(p); }));
  CHECK(op_gradchecks("softplus", base, [&](Graph& g, int p) { return g.softplus(p); }));
  const Tensor mid53 = random_tensor({5, 3}, rng);
  CHECK(op_gradchecks("concat_cols", base, [&](Graph& g, int p) {
    return g.concat_cols({p, g.input(mid53), p});
  }));
  const Tensor top27 = random_tensor({2, 7}, rng);
  CHECK(op_gradchecks("concat_rows", base, [&](Graph& g, int p) {
    return g.concat_rows({g.input(top27), p});
  }));
  CHECK(op_gradchecks("slice_rows", base, [&](Graph& g, int p) {
    return g.slice_rows(p, 1, 4);
  }));
  CHECK(op_gradchecks("broadcast_rows", Tensor(random_tensor({1, 7}, rng)), [&](Graph& g, int p) {
    return g.broadcast_rows(p, 9);
  }));
  CHECK(op_gradchecks("mean_all", base, [&](Graph& g, int p) { return g.mean_all(p); }));
  const Tensor gamma = random_tensor({1, 7}, rng, 0.5, 1.5);
  const Tensor beta = random_tensor({1, 7}, rng);
  CHECK(op_gradchecks("layer_norm.x", base, [&](Graph& g, int p) {
    return g.layer_norm(p, g.input(gamma), g.input(beta));
  }));
  CHECK(op_gradchecks("embedding", Tensor(random_tensor({6, 4}, rng)), [&](Graph& g, int p) {
    return g.embedding(p, {0, 3, 3, 5, 1});
  }));
}

TEST_CASE("straight_through passes the downstream gradient to its input unchanged") {
  Rng rng(13);
  Tensor lat = random_tensor({5, 7}, rng);
  Tensor quantized = random_tensor({5, 7}, rng);
  Tensor wgt = random_tensor({5, 7}, rng);

  // gradient w.r.t. the pre-quantization input
  Parameter p("lat", lat);
  {
    Graph g;
    int q = g.straight_through(g.param(p), quantized);
    int l = g.sum_all(g.mul(g.mul(q, q), g.input(wgt)));
    p.zero_grad();
    g.backward(l);
  }
  // gradient w.r.t. the quantized value fed directly
  Parameter pq("q", quantized);
  {
    Graph g;
    int l = g.sum_all(g.mul(g.mul(g.param(pq), g.param(pq)), g.input(wgt)));
    pq.zero_grad();
    g.backward(l);
  }
  for (size_t i = 0; i < p.grad.v.size(); ++i)
    CHECK(p.grad.v[i] == doctest::Approx(pq.grad.v[i]).epsilon(1e-12));
}

TEST_CASE("conv1d gradients match finite differences across geometries") {
  Rng rng(17);
  for (auto [stride, pad, dil] : {std::tuple{1, 2, 1}, {2, 1, 1}, {1, 4, 2}, {1, 0, 1}}) {
    Tensor x = random_tensor({12, 3}, rng);
    CHECK(op_gradchecks("conv1d.w", Tensor(random_tensor({5, 3, 4}, rng, -0.5, 0.5)),
                        [&, stride = stride, pad = pad, dil = dil](Graph& g, int p) {
                          return g.conv1d(g.input(x), p, -1, stride, pad, dil);
                        }));
    Tensor w = random_tensor({3, 3, 2}, rng, -0.5, 0.5);
    CHECK(op_gradchecks("conv1d.x", x,
                        [&, stride = stride, pad = pad, dil = dil](Graph& g, int p) {
                          return g.conv1d(p, g.input(w), -1, stride, pad, dil);
                        }));
  }
}

TEST_CASE("three-layer mlp loss gradient matches finite differences") {
  Rng rng(23);
  Linear l1("mlp.l1", 6, 16, rng), l2("mlp.l2", 16, 16, rng), l3("mlp.l3", 16, 3, rng);
  std::vector<Parameter*> ps;
  l1.params(ps);
  l2.params(ps);
  l3.params(ps);
  Tensor x = random_tensor({10, 6}, rng);
  Tensor target = random_tensor({10, 3}, rng);

  auto loss = [&](bool with_grad) {
    Graph g;
    int h = g.gelu(l1.out(g, g.input(x)));
    h = g.tanh_(l2.out(g, h));
    int y = l3.out(g, h);
    int l = mse(g, y, g.input(target));
    if (with_grad) {
      for (auto* p : ps) p->zero_grad();
      g.backward(l);
    }
    return g.val(l).v[0];
  };
  auto report = gradcheck(ps, loss, 1e-4, 24, 99);
  INFO(report.summary());
  CHECK(report.pass);
}

TEST_CASE("gradcheck flags a corrupted gradient and names the block") {
  Rng rng(31);
  Parameter p("good", random_tensor({4, 4}, rng));
  Parameter q("corrupted", random_tensor({4, 4}, rng));
  auto loss = [&](bool with_grad) {
    Graph g;
    int l = g.sum_all(g.mul(g.param(p), g.param(q)));
    if (with_grad) {
      p.zero_grad();
      q.zero_grad();
      g.backward(l);
      for (auto& x : q.grad.v) x += 0.5;  // simulate a wrong backward rule
    }
    return g.val(l).v[0];
  };
  auto report = gradcheck({&p, &q}, loss, 1e-5);
  CHECK_FALSE(report.pass);
  bool good_ok = false, bad_flagged = false;
  for (auto& b : report.blocks) {
    if (b.name == "good" && b.pass) good_ok = true;
    if (b.name == "corrupted" && !b.pass) bad_flagged = true;
  }
  CHECK(good_ok);
  CHECK(bad_flagged);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged; first step is bias-corrected") {
  Rng rng(37);
  Parameter p("p", random_tensor({2, 2}, rng));
  Tensor before = p.value;
  Adam opt({&p}, {.lr = 0.01});
  opt.zero_grad();
  opt.step();
  CHECK(p.value.v == before.v);

  // first step with gradient g: update = -lr * g/|g| elementwise (bias
  // correction makes mhat = g, vhat = g^2 exactly at t=1)
  Parameter q("q", Tensor::from(1, 3, {1.0, -2.0, 0.5}));
  Adam opt2({&q}, {.lr = 0.01});
  q.grad = Tensor::from(1, 3, {0.3, -0.7, 0.0});
  opt2.step();
  CHECK(q.value(0, 0) == doctest::Approx(1.0 - 0.01 * (0.3 / (0.3 + 1e-8))).epsilon(1e-10));
  CHECK(q.value(0, 1) == doctest::Approx(-2.0 - 0.01 * (-0.7 / (0.7 + 1e-8))).epsilon(1e-10));
  CHECK(q.value(0, 2) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("adam: identical runs produce identical parameters") {
  auto run = [] {
    Rng rng(41);
    Parameter p("p", random_tensor({8, 8}, rng));
    Adam opt({&p}, {.lr = 3e-3});
    Tensor target = random_tensor({8, 8}, rng);
    for (int it = 0; it < 25; ++it) {
      opt.zero_grad();
      Graph g;
      int l = mse(g, g.param(p), g.input(target));
      g.backward(l);
      opt.step();
    }
    return p.value.v;
  };
  CHECK(run() == run());
}

TEST_CASE("checkpoint: bit-exact round trip, corruption and hash rejection") {
  Rng rng(43);
  std::string path = (std::filesystem::temp_directory_path() / "pfvc_core_test.ckpt").string();

  Checkpoint ck;
  ck.config_hash = "cfg123";
  ck.put("a", random_tensor({7, 3}, rng));
  ck.put("w3", random_tensor({2, 3, 4}, rng));
  save_checkpoint(ck, path);

  Checkpoint back = load_checkpoint(path, "cfg123");
  REQUIRE(back.records.size() == 2);
  CHECK(back.records[0].first == "a");
  CHECK(back.records[0].second.v == ck.records[0].second.v);
  CHECK(back.records[1].second.shape == std::vector<int>{2, 3, 4});
  CHECK(back.records[1].second.v == ck.records[1].second.v);

  CHECK_THROWS_WITH_AS(load_checkpoint(path, "other"), doctest::Contains("hash"),
                       std::runtime_error);

  // truncate -> checksum failure
  {
    std::ifstream in(path, std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
    bytes.resize(bytes.size() - 9);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("checksum"),
                       std::runtime_error);
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint rejects duplicate record names") {
  Checkpoint ck;
  ck.put("x", Tensor::zeros({1, 1}));
  CHECK_THROWS_WITH_AS(ck.put("x", Tensor::zeros({1, 1})), doctest::Contains("duplicate"),
                       std::runtime_error);
}

TEST_CASE("attention rows are a convex combination; gradcheck passes") {
  Rng rng(47);
  Attention attn("attn", 5, 6, 8, rng);
  std::vector<Parameter*> ps;
  attn.params(ps);
  Tensor q = random_tensor({4, 5}, rng), kv = random_tensor({9, 6}, rng);
  auto loss = [&](bool with_grad) {
    Graph g;
    int out = attn.out(g, g.input(q), g.input(kv));
    Rng wr(7);
    Tensor wgt = random_tensor({4, 5}, wr);
    int l = g.sum_all(g.mul(out, g.input(wgt)));
    if (with_grad) {
      for (auto* p : ps) p->zero_grad();
      g.backward(l);
    }
    return g.val(l).v[0];
  };
  auto report = gradcheck(ps, loss, 1e-4, 20, 3);
  INFO(report.summary());
  CHECK(report.pass);
}
