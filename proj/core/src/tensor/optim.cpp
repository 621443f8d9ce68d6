#include "fluidfm/tensor/optim.hpp"

#include <cmath>

#include "fluidfm/util/errors.hpp"

namespace fluidfm::tensor {

double cosine_lr(double base_lr, int64_t step, int64_t total_steps) {
  if (total_steps <= 1) return base_lr;
  const double t = std::min<double>(double(step), double(total_steps - 1));
  return base_lr * 0.5 * (1.0 + std::cos(M_PI * t / double(total_steps - 1)));
}

void Sgd::step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, double lr) {
  require(params.size() == grads.size(), Err::InvalidAttr, "sgd params/grads mismatch");
  if (momentum_ != 0.0 && velocity_.empty()) {
    velocity_.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      velocity_[i].assign(size_t(params[i].size()), 0.0);
    }
  }
  for (size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i].data();
    const auto& g = grads[i].data();
    std::vector<double> next(p.size());
    if (momentum_ != 0.0) {
      auto& v = velocity_[i];
      for (size_t j = 0; j < p.size(); ++j) {
        v[j] = momentum_ * v[j] + g[j];
        next[j] = p[j] - lr * v[j];
      }
    } else {
      for (size_t j = 0; j < p.size(); ++j) next[j] = p[j] - lr * g[j];
    }
    params[i] = make_tensor(params[i].shape(), std::move(next), true);
  }
}

void Adam::step(std::vector<Tensor>& params, const std::vector<Tensor>& grads,
                const std::vector<double>& lrs) {
  require(params.size() == grads.size() && params.size() == lrs.size(), Err::InvalidAttr,
          "adam params/grads/lrs mismatch");
  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      m_[i].assign(size_t(params[i].size()), 0.0);
      v_[i].assign(size_t(params[i].size()), 0.0);
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, double(t_));
  const double bc2 = 1.0 - std::pow(beta2_, double(t_));
  for (size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i].data();
    const auto& g = grads[i].data();
    std::vector<double> next(p.size());
    auto& m = m_[i];
    auto& v = v_[i];
    for (size_t j = 0; j < p.size(); ++j) {
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
      const double mh = m[j] / bc1;
      const double vh = v[j] / bc2;
      next[j] = p[j] - lrs[i] * mh / (std::sqrt(vh) + eps_);
    }
    params[i] = make_tensor(params[i].shape(), std::move(next), true);
  }
}

}  // namespace fluidfm::tensor
