#include "pfvc/core/kernels.hpp"

namespace pfvc::core::kernels {

void matmul_serial(const real* a, const real* b, real* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    real* ci = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) ci[j] = 0.0;
    const real* ai = a + static_cast<size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const real aip = ai[p];
      const real* bp = b + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

void matmul(const real* a, const real* b, real* c, int m, int k, int n) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    real* ci = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) ci[j] = 0.0;
    const real* ai = a + static_cast<size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const real aip = ai[p];
      const real* bp = b + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

void matmul_nt_serial(const real* a, const real* b, real* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const real* ai = a + static_cast<size_t>(i) * k;
    real* ci = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const real* bj = b + static_cast<size_t>(j) * k;
      real s = 0.0;
      for (int p = 0; p < k; ++p) s += ai[p] * bj[p];
      ci[j] = s;
    }
  }
}

void matmul_nt(const real* a, const real* b, real* c, int m, int k, int n) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    const real* ai = a + static_cast<size_t>(i) * k;
    real* ci = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const real* bj = b + static_cast<size_t>(j) * k;
      real s = 0.0;
      for (int p = 0; p < k; ++p) s += ai[p] * bj[p];
      ci[j] = s;
    }
  }
}

void matmul_tn_serial(const real* a, const real* b, real* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    real* ci = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) ci[j] = 0.0;
    for (int p = 0; p < k; ++p) {
      const real api = a[static_cast<size_t>(p) * m + i];
      const real* bp = b + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) ci[j] += api * bp[j];
    }
  }
}

void matmul_tn(const real* a, const real* b, real* c, int m, int k, int n) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    real* ci = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) ci[j] = 0.0;
    for (int p = 0; p < k; ++p) {
      const real api = a[static_cast<size_t>(p) * m + i];
      const real* bp = b + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) ci[j] += api * bp[j];
    }
  }
}

namespace {

inline void conv1d_row(const real* x, const real* w, const real* bias, real* y,
                       int t, int c_in, int c_out, int kernel, int stride,
                       int pad, int dil, int to) {
  real* yo = y + static_cast<size_t>(to) * c_out;
  for (int co = 0; co < c_out; ++co) yo[co] = bias ? bias[co] : 0.0;
  const int base = to * stride - pad;
  for (int kk = 0; kk < kernel; ++kk) {
    const int ti = base + kk * dil;
    if (ti < 0 || ti >= t) continue;
    const real* xt = x + static_cast<size_t>(ti) * c_in;
    const real* wk = w + static_cast<size_t>(kk) * c_in * c_out;
    for (int ci = 0; ci < c_in; ++ci) {
      const real xv = xt[ci];
      const real* wc = wk + static_cast<size_t>(ci) * c_out;
      for (int co = 0; co < c_out; ++co) yo[co] += xv * wc[co];
    }
  }
}

}  // namespace

void conv1d_serial(const real* x, const real* w, const real* bias, real* y, int t,
                   int c_in, int c_out, int kernel, int stride, int pad, int dil) {
  const int t_out = conv1d_out_len(t, kernel, stride, pad, dil);
  for (int to = 0; to < t_out; ++to)
    conv1d_row(x, w, bias, y, t, c_in, c_out, kernel, stride, pad, dil, to);
}

void conv1d(const real* x, const real* w, const real* bias, real* y, int t,
            int c_in, int c_out, int kernel, int stride, int pad, int dil) {
  const int t_out = conv1d_out_len(t, kernel, stride, pad, dil);
#pragma omp parallel for schedule(static)
  for (int to = 0; to < t_out; ++to)
    conv1d_row(x, w, bias, y, t, c_in, c_out, kernel, stride, pad, dil, to);
}

void conv1d_grad_x(const real* gy, const real* w, real* gx, int t, int c_in,
                   int c_out, int kernel, int stride, int pad, int dil) {
  const int t_out = conv1d_out_len(t, kernel, stride, pad, dil);
  // Parallel over input rows: each ti is written by exactly one iteration.
#pragma omp parallel for schedule(static)
  for (int ti = 0; ti < t; ++ti) {
    real* gxt = gx + static_cast<size_t>(ti) * c_in;
    for (int kk = 0; kk < kernel; ++kk) {
      const int num = ti + pad - kk * dil;
      if (num < 0 || num % stride != 0) continue;
      const int to = num / stride;
      if (to >= t_out) continue;
      const real* gyo = gy + static_cast<size_t>(to) * c_out;
      const real* wk = w + static_cast<size_t>(kk) * c_in * c_out;
      for (int ci = 0; ci < c_in; ++ci) {
        const real* wc = wk + static_cast<size_t>(ci) * c_out;
        real s = 0.0;
        for (int co = 0; co < c_out; ++co) s += gyo[co] * wc[co];
        gxt[ci] += s;
      }
    }
  }
}

void conv1d_grad_w(const real* gy, const real* x, real* gw, real* gbias, int t,
                   int c_in, int c_out, int kernel, int stride, int pad, int dil) {
  const int t_out = conv1d_out_len(t, kernel, stride, pad, dil);
#pragma omp parallel for schedule(static)
  for (int kk = 0; kk < kernel; ++kk) {
    real* gwk = gw + static_cast<size_t>(kk) * c_in * c_out;
    for (int to = 0; to < t_out; ++to) {
      const int ti = to * stride - pad + kk * dil;
      if (ti < 0 || ti >= t) continue;
      const real* xt = x + static_cast<size_t>(ti) * c_in;
      const real* gyo = gy + static_cast<size_t>(to) * c_out;
      for (int ci = 0; ci < c_in; ++ci) {
        const real xv = xt[ci];
        real* gwc = gwk + static_cast<size_t>(ci) * c_out;
        for (int co = 0; co < c_out; ++co) gwc[co] += xv * gyo[co];
      }
    }
  }
  if (gbias) {
    for (int to = 0; to < t_out; ++to) {
      const real* gyo = gy + static_cast<size_t>(to) * c_out;
      for (int co = 0; co < c_out; ++co) gbias[co] += gyo[co];
    }
  }
}

}  // namespace pfvc::core::kernels
