#pragma once

#include "pfvc/core/tensor.hpp"

namespace pfvc::core::kernels {

// Hot loops behind the graph ops. Every kernel has an OpenMP variant and a
// serial reference; both use the same per-output accumulation order, so they
// produce bit-identical results for any thread count. Tests and the
// bench_kernels tool compare the two.

// C[m x n] = A[m x k] * B[k x n]
void matmul(const real* a, const real* b, real* c, int m, int k, int n);
void matmul_serial(const real* a, const real* b, real* c, int m, int k, int n);

// C[m x n] = A[m x k] * B[n x k]^T
void matmul_nt(const real* a, const real* b, real* c, int m, int k, int n);
void matmul_nt_serial(const real* a, const real* b, real* c, int m, int k, int n);

// C[m x n] = A[k x m]^T * B[k x n]
void matmul_tn(const real* a, const real* b, real* c, int m, int k, int n);
void matmul_tn_serial(const real* a, const real* b, real* c, int m, int k, int n);

inline int conv1d_out_len(int t, int kernel, int stride, int pad, int dil) {
  int span = (kernel - 1) * dil + 1;
  int padded = t + 2 * pad;
  return padded < span ? 0 : (padded - span) / stride + 1;
}

// x[T x Cin], w[K x Cin x Cout], bias[Cout] (nullable), y[To x Cout]
void conv1d(const real* x, const real* w, const real* bias, real* y, int t,
            int c_in, int c_out, int kernel, int stride, int pad, int dil);
void conv1d_serial(const real* x, const real* w, const real* bias, real* y, int t,
                   int c_in, int c_out, int kernel, int stride, int pad, int dil);

// Gradients; gx / gw / gbias are accumulated into (+=).
void conv1d_grad_x(const real* gy, const real* w, real* gx, int t, int c_in,
                   int c_out, int kernel, int stride, int pad, int dil);
void conv1d_grad_w(const real* gy, const real* x, real* gw, real* gbias, int t,
                   int c_in, int c_out, int kernel, int stride, int pad, int dil);

}  // namespace pfvc::core::kernels
