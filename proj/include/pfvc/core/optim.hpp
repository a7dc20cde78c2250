#pragma once

#include <vector>

#include "pfvc/core/graph.hpp"

namespace pfvc::core {

struct AdamConfig {
  real lr = 1e-3;
  real beta1 = 0.9;
  real beta2 = 0.999;
  real eps = 1e-8;
  real grad_clip = 0.0;  // 0 disables; otherwise global-norm clipping
};

class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig cfg);

  void zero_grad();
  void step();

  int steps_taken() const { return t_; }
  const std::vector<Parameter*>& params() const { return params_; }

 private:
  std::vector<Parameter*> params_;
  AdamConfig cfg_;
  int t_ = 0;
  std::vector<std::vector<real>> m_, v_;
};

}  // namespace pfvc::core
