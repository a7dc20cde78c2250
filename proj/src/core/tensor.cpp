#include "pfvc/core/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace pfvc::core {

Tensor Tensor::zeros(std::vector<int> s) {
  Tensor t;
  t.shape = std::move(s);
  size_t n = 1;
  for (int d : t.shape) {
    if (d < 0) throw std::runtime_error("tensor: negative dimension");
    n *= static_cast<size_t>(d);
  }
  t.v.assign(n, 0.0);
  return t;
}

Tensor Tensor::full(std::vector<int> s, real value) {
  Tensor t = zeros(std::move(s));
  for (auto& x : t.v) x = value;
  return t;
}

Tensor Tensor::from(int rows, int cols, std::vector<real> data) {
  if (static_cast<size_t>(rows) * cols != data.size())
    throw std::runtime_error("tensor: data length does not match shape");
  Tensor t;
  t.shape = {rows, cols};
  t.v = std::move(data);
  return t;
}

bool Tensor::all_finite() const {
  for (real x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? " x " : "") << shape[i];
  os << "]";
  return os.str();
}

}  // namespace pfvc::core
