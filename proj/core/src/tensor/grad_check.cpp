#include "fluidfm/tensor/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "fluidfm/util/errors.hpp"
#include "fluidfm/util/rng.hpp"

namespace fluidfm::tensor {

namespace {

Tensor probe_loss(const Tensor& out, const Tensor& direction) {
  return sum(mul(out, direction));
}

}  // namespace

double grad_check_fn(const std::function<Tensor(std::span<const Tensor>)>& f,
                     const std::vector<Tensor>& inputs, double eps, uint64_t probe_seed,
                     const std::vector<int>& skip_inputs) {
  require(scalar_mode() == Scalar::F64, Err::InvalidAttr,
          "grad_check requires 64-bit mode");
  require(eps >= 1e-6 && eps <= 1e-3, Err::InvalidAttr, "eps must be in [1e-6, 1e-3]");

  auto skipped = [&](int i) {
    return std::find(skip_inputs.begin(), skip_inputs.end(), i) != skip_inputs.end();
  };

  // analytic gradients
  std::vector<Tensor> leaves;
  leaves.reserve(inputs.size());
  for (size_t i = 0; i < inputs.size(); ++i) {
    leaves.push_back(skipped(int(i)) ? inputs[i].detached() : inputs[i].with_grad());
  }
  Tensor direction;
  GradMap grads;
  {
    TapeScope scope;
    Tensor out = f(leaves);
    Rng rng(probe_seed);
    std::vector<double> dir(size_t(out.size()));
    rng.fill_normal(dir, 1.0);
    direction = make_tensor(out.shape(), std::move(dir));
    Tensor loss = probe_loss(out, direction);
    grads = scope.tape().backward(loss);
  }

  // central differences
  auto loss_at = [&](const std::vector<Tensor>& args) {
    Tensor out = f(args);
    return probe_loss(out, direction).scalar_value();
  };

  double worst = 0.0;
  for (size_t i = 0; i < inputs.size(); ++i) {
    if (skipped(int(i))) continue;
    const Tensor analytic = grads.grad(leaves[i]);
    const auto& base = inputs[i].data();
    for (size_t j = 0; j < base.size(); ++j) {
      std::vector<Tensor> args = inputs;
      std::vector<double> plus = base, minus = base;
      plus[j] += eps;
      minus[j] -= eps;
      args[i] = make_tensor(inputs[i].shape(), std::move(plus));
      const double fp = loss_at(args);
      args[i] = make_tensor(inputs[i].shape(), std::move(minus));
      const double fm = loss_at(args);
      const double central = (fp - fm) / (2.0 * eps);
      const double a = analytic.at(int64_t(j));
      const double denom = std::max({std::abs(a), std::abs(central), 1e-8});
      worst = std::max(worst, std::abs(a - central) / denom);
    }
  }
  return worst;
}

double grad_check(Op op, const std::vector<Tensor>& inputs, const Attrs& attrs, double eps,
                  uint64_t probe_seed, const std::vector<int>& skip_inputs) {
  return grad_check_fn(
      [op, &attrs](std::span<const Tensor> in) { return evaluate(op, in, attrs); }, inputs,
      eps, probe_seed, skip_inputs);
}

}  // namespace fluidfm::tensor
