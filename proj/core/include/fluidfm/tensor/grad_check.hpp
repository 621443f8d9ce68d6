#pragma once

#include <functional>

#include "fluidfm/tensor/ops.hpp"

namespace fluidfm::tensor {

/// Max over all checked input entries of
///   |analytic - central_difference| / max(|analytic|, |central|, 1e-8).
/// Requires F64 mode and eps in [1e-6, 1e-3]. skip_inputs lists positions that
/// have no gradient path by contract (e.g. interpolation query coordinates).
double grad_check(Op op, const std::vector<Tensor>& inputs, const Attrs& attrs, double eps,
                  uint64_t probe_seed = 1234, const std::vector<int>& skip_inputs = {});

/// Same check for a composite differentiable function of its inputs.
double grad_check_fn(const std::function<Tensor(std::span<const Tensor>)>& f,
                     const std::vector<Tensor>& inputs, double eps,
                     uint64_t probe_seed = 1234, const std::vector<int>& skip_inputs = {});

}  // namespace fluidfm::tensor
