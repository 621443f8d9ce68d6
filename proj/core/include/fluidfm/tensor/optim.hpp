#pragma once

#include <cstdint>
#include <vector>

#include "fluidfm/tensor/tensor.hpp"

namespace fluidfm::tensor {

/// Cosine decay from base_lr to ~0 over total steps.
double cosine_lr(double base_lr, int64_t step, int64_t total_steps);

/// Plain SGD (optional momentum). Parameters are replaced functionally: each
/// step produces new leaf tensors, never mutating shared storage.
class Sgd {
 public:
  explicit Sgd(double momentum = 0.0) : momentum_(momentum) {}
  void step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, double lr);

 private:
  double momentum_;
  std::vector<std::vector<double>> velocity_;
};

class Adam {
 public:
  Adam(double beta1 = 0.9, double beta2 = 0.99, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}
  /// lrs gives a per-parameter learning rate (hash tables and MLPs train at
  /// different rates).
  void step(std::vector<Tensor>& params, const std::vector<Tensor>& grads,
            const std::vector<double>& lrs);

 private:
  double beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace fluidfm::tensor
