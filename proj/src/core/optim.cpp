#include "pfvc/core/optim.hpp"

#include <cmath>

namespace pfvc::core {

Adam::Adam(std::vector<Parameter*> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (auto* p : params_) {
    m_.emplace_back(p->value.v.size(), 0.0);
    v_.emplace_back(p->value.v.size(), 0.0);
  }
}

void Adam::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

void Adam::step() {
  ++t_;
  real clip_scale = 1.0;
  if (cfg_.grad_clip > 0.0) {
    real sq = 0.0;
    for (auto* p : params_)
      for (real g : p->grad.v) sq += g * g;
    real norm = std::sqrt(sq);
    if (norm > cfg_.grad_clip) clip_scale = cfg_.grad_clip / norm;
  }
  const real bc1 = 1.0 - std::pow(cfg_.beta1, t_);
  const real bc2 = 1.0 - std::pow(cfg_.beta2, t_);
  for (size_t k = 0; k < params_.size(); ++k) {
    auto& p = *params_[k];
    auto& m = m_[k];
    auto& v = v_[k];
    for (size_t i = 0; i < p.value.v.size(); ++i) {
      const real g = p.grad.v[i] * clip_scale;
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      const real mhat = m[i] / bc1;
      const real vhat = v[i] / bc2;
      p.value.v[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

}  // namespace pfvc::core
