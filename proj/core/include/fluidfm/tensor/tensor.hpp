#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "fluidfm/util/rng.hpp"

namespace fluidfm::tensor {

/// Storage precision. F32 is the default working mode: every op result is
/// rounded to 32-bit precision (and GEMMs run in single precision). F64 keeps
/// full doubles and is required by the finite-difference gradient checks.
enum class Scalar { F32, F64 };

Scalar scalar_mode();
void set_scalar_mode(Scalar m);

struct ScalarModeScope {
  explicit ScalarModeScope(Scalar m) : prev_(scalar_mode()) { set_scalar_mode(m); }
  ~ScalarModeScope() { set_scalar_mode(prev_); }

 private:
  Scalar prev_;
};

/// Dense row-major tensor. Immutable after creation; copies share storage and
/// are safe to read from any thread. Gradient participation is a property of
/// the tensor (requires_grad) and of whether a tape is active when an op runs.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int64_t> shape);
  static Tensor full(std::vector<int64_t> shape, double value);
  static Tensor scalar(double value);
  static Tensor from_data(std::vector<int64_t> shape, std::vector<double> data);
  static Tensor randn(std::vector<int64_t> shape, Rng& rng, double sigma = 1.0);

  /// Same values, marked as a gradient leaf (new identity).
  Tensor with_grad() const;
  /// Same values, detached from gradient tracking (new identity).
  Tensor detached() const;

  bool defined() const { return impl_ != nullptr; }
  const std::vector<int64_t>& shape() const;
  int rank() const { return static_cast<int>(shape().size()); }
  int64_t dim(int axis) const;
  int64_t size() const;
  bool requires_grad() const;

  const std::vector<double>& data() const;
  double at(int64_t index) const;
  double scalar_value() const;
  double max_abs() const;
  bool all_finite() const;

  /// Stable identity used by tapes and gradient maps.
  const void* id() const { return impl_.get(); }

 private:
  struct Impl {
    std::vector<int64_t> shape;
    std::shared_ptr<const std::vector<double>> data;
    bool requires_grad = false;
  };
  explicit Tensor(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}
  static Tensor make(std::vector<int64_t> shape,
                     std::shared_ptr<const std::vector<double>> data, bool requires_grad);

  std::shared_ptr<const Impl> impl_;

  friend Tensor make_tensor(std::vector<int64_t> shape, std::vector<double> data,
                            bool requires_grad);
  friend Tensor share_reshaped(const Tensor& t, std::vector<int64_t> shape);
};

/// Builds a tensor from raw data, applying the active precision mode.
Tensor make_tensor(std::vector<int64_t> shape, std::vector<double> data,
                   bool requires_grad = false);

/// New tensor sharing storage with t but carrying a different shape.
/// Internal helper for reshape; identity is fresh.
Tensor share_reshaped(const Tensor& t, std::vector<int64_t> shape);

int64_t shape_size(const std::vector<int64_t>& shape);

/// Rounds v through 32-bit precision when the active mode is F32.
void apply_mode_rounding(std::vector<double>& v);

}  // namespace fluidfm::tensor
