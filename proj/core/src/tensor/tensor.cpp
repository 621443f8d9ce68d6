#include "fluidfm/tensor/tensor.hpp"

#include <atomic>
#include <cmath>

#include "fluidfm/util/errors.hpp"

namespace fluidfm::tensor {

namespace {
std::atomic<Scalar> g_mode{Scalar::F32};
}

Scalar scalar_mode() { return g_mode.load(std::memory_order_relaxed); }
void set_scalar_mode(Scalar m) { g_mode.store(m, std::memory_order_relaxed); }

int64_t shape_size(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

void apply_mode_rounding(std::vector<double>& v) {
  if (scalar_mode() == Scalar::F32) {
    for (double& x : v) x = static_cast<double>(static_cast<float>(x));
  }
}

Tensor Tensor::make(std::vector<int64_t> shape,
                    std::shared_ptr<const std::vector<double>> data, bool requires_grad) {
  auto impl = std::make_shared<Impl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor make_tensor(std::vector<int64_t> shape, std::vector<double> data, bool requires_grad) {
  require(shape_size(shape) == static_cast<int64_t>(data.size()), Err::ShapeMismatch,
          "tensor data length does not match shape");
  apply_mode_rounding(data);
  return Tensor::make(std::move(shape),
                      std::make_shared<const std::vector<double>>(std::move(data)),
                      requires_grad);
}

Tensor share_reshaped(const Tensor& t, std::vector<int64_t> shape) {
  require(shape_size(shape) == t.size(), Err::ShapeMismatch, "reshape size mismatch");
  return Tensor::make(std::move(shape), t.impl_->data, false);
}

Tensor Tensor::zeros(std::vector<int64_t> shape) {
  const int64_t n = shape_size(shape);
  return make_tensor(std::move(shape), std::vector<double>(static_cast<size_t>(n), 0.0));
}

Tensor Tensor::full(std::vector<int64_t> shape, double value) {
  const int64_t n = shape_size(shape);
  return make_tensor(std::move(shape), std::vector<double>(static_cast<size_t>(n), value));
}

Tensor Tensor::scalar(double value) { return make_tensor({}, {value}); }

Tensor Tensor::from_data(std::vector<int64_t> shape, std::vector<double> data) {
  return make_tensor(std::move(shape), std::move(data));
}

Tensor Tensor::randn(std::vector<int64_t> shape, Rng& rng, double sigma) {
  const int64_t n = shape_size(shape);
  std::vector<double> data(static_cast<size_t>(n));
  rng.fill_normal(data, sigma);
  return make_tensor(std::move(shape), std::move(data));
}

Tensor Tensor::with_grad() const {
  require(defined(), Err::InvalidAttr, "with_grad on undefined tensor");
  return make(impl_->shape, impl_->data, true);
}

Tensor Tensor::detached() const {
  require(defined(), Err::InvalidAttr, "detached on undefined tensor");
  return make(impl_->shape, impl_->data, false);
}

const std::vector<int64_t>& Tensor::shape() const {
  static const std::vector<int64_t> empty;
  return impl_ ? impl_->shape : empty;
}

int64_t Tensor::dim(int axis) const {
  require(impl_ && axis >= 0 && axis < rank(), Err::InvalidAttr, "dim axis out of range");
  return impl_->shape[static_cast<size_t>(axis)];
}

int64_t Tensor::size() const { return impl_ ? shape_size(impl_->shape) : 0; }

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

const std::vector<double>& Tensor::data() const {
  static const std::vector<double> empty;
  return impl_ ? *impl_->data : empty;
}

double Tensor::at(int64_t index) const { return (*impl_->data)[static_cast<size_t>(index)]; }

double Tensor::scalar_value() const {
  require(size() == 1, Err::ShapeMismatch, "scalar_value on non-scalar tensor");
  return (*impl_->data)[0];
}

double Tensor::max_abs() const {
  double m = 0.0;
  for (double v : data()) m = std::max(m, std::abs(v));
  return m;
}

bool Tensor::all_finite() const {
  for (double v : data()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace fluidfm::tensor
