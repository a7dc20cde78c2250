#pragma once

#include <string>
#include <vector>

namespace pfvc::core {

using real = double;

// Dense row-major tensor. Rank 2 everywhere except conv weights (rank 3,
// [kernel][c_in][c_out]). Scalars are [1 x 1], vectors [1 x n].
struct Tensor {
  std::vector<int> shape;
  std::vector<real> v;

  Tensor() = default;

  static Tensor zeros(std::vector<int> s);
  static Tensor full(std::vector<int> s, real value);
  static Tensor scalar(real value) { return full({1, 1}, value); }
  static Tensor from(int rows, int cols, std::vector<real> data);

  int numel() const {
    int n = 1;
    for (int d : shape) n *= d;
    return shape.empty() ? 0 : n;
  }
  int rank() const { return static_cast<int>(shape.size()); }
  int rows() const { return shape.empty() ? 0 : shape[0]; }
  int cols() const { return rank() < 2 ? 1 : shape[1]; }

  real& operator()(int i, int j) { return v[static_cast<size_t>(i) * cols() + j]; }
  real operator()(int i, int j) const { return v[static_cast<size_t>(i) * cols() + j]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  bool all_finite() const;
  std::string shape_str() const;
};

}  // namespace pfvc::core
