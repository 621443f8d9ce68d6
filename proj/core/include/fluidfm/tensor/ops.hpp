#pragma once

#include <optional>
#include <span>
#include <string>

#include "fluidfm/tensor/tape.hpp"
#include "fluidfm/tensor/tensor.hpp"

namespace fluidfm::tensor {

/// Primitive kinds, used by the generic evaluate() dispatcher and by the
/// gradient-check harness to enumerate everything that must differentiate
/// correctly.
enum class Op {
  Add, Sub, Mul, Div, Neg,
  Exp, Log, PowScalar, MulScalar, AddScalar,
  Relu, Gelu, Sigmoid, Softplus, Erf,
  Sum, Mean, CumsumLast,
  MatMul, Bmm, AddBias,
  Reshape, Transpose, Slice, Concat, GatherRows, RepeatLeading,
  SoftmaxLast, LayerNorm,
  BilinearSample, TrilinearSample, LerpAxis0,
  PatchifyConv3d,
};

const char* op_name(Op op);

/// Attribute bag for evaluate(). Convenience wrappers below take typed
/// arguments; the bag exists so the dispatcher and grad_check can drive any
/// primitive uniformly.
struct Attrs {
  std::vector<int64_t> axes;     // reduction axes / transpose permutation / target shape
  std::vector<int64_t> ints;     // op-specific integers (slice bounds, patch sizes, ...)
  std::vector<int64_t> indices;  // gather indices
  std::vector<double> reals;     // interpolation positions
  double real = 0.0;             // scalar operand / epsilon
  bool flag = false;             // keepdims / exclusive
};

/// Generic dispatcher; shapes must conform per op kind, attrs must be valid.
Tensor evaluate(Op op, std::span<const Tensor> inputs, const Attrs& attrs);

// ---- elementwise ----------------------------------------------------------
// Binary ops require identical shapes, except that either side may be a
// 1-element tensor (scalar broadcast). Anything else raises ShapeMismatch.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor pow_scalar(const Tensor& x, double p);
Tensor mul_scalar(const Tensor& x, double c);
Tensor add_scalar(const Tensor& x, double c);
Tensor relu(const Tensor& x);
Tensor gelu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor erf(const Tensor& x);

// ---- reductions -----------------------------------------------------------
Tensor sum(const Tensor& x);                                        // scalar
Tensor sum(const Tensor& x, std::vector<int64_t> axes, bool keepdims = false);
Tensor mean(const Tensor& x);
Tensor mean(const Tensor& x, std::vector<int64_t> axes, bool keepdims = false);
Tensor cumsum_last(const Tensor& x, bool exclusive = false);

// ---- linear algebra -------------------------------------------------------
Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k] x [k,n]
Tensor bmm(const Tensor& a, const Tensor& b);     // [..,m,k] x [..,k,n]
Tensor add_bias(const Tensor& x, const Tensor& bias);  // [..,d] + [d]

// ---- shape ----------------------------------------------------------------
Tensor reshape(const Tensor& x, std::vector<int64_t> shape);
Tensor transpose(const Tensor& x, std::vector<int64_t> perm);
Tensor slice(const Tensor& x, int axis, int64_t start, int64_t len);
Tensor concat(std::span<const Tensor> xs, int axis);
Tensor gather_rows(const Tensor& x, std::vector<int64_t> indices);
Tensor repeat_leading(const Tensor& x, int64_t n);

// ---- normalization & attention -------------------------------------------
Tensor softmax_last(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);
/// Scaled dot-product attention over batched heads: q,k,v are [B,n,d].
/// mask, when given, is [B,n,n] and is added to the logits (use large
/// negatives to forbid entries); it does not receive gradients. bias is a
/// learned [B,n,n] logit offset and does.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, double scale,
                 const std::optional<Tensor>& mask = std::nullopt,
                 const std::optional<Tensor>& bias = std::nullopt);

// ---- interpolation --------------------------------------------------------
/// grid [H,W,C], pts [N,2] as (row,col) continuous coordinates, clamped to
/// the border. Gradients flow to grid values only.
Tensor bilinear_sample(const Tensor& grid, const Tensor& pts);
/// grid [D,H,W,C], pts [N,3] as (z,y,x)-style (d,h,w) continuous coords.
Tensor trilinear_sample(const Tensor& grid, const Tensor& pts);
/// x [T, ...], positions [n] in [0, T-1]: linear interpolation along axis 0.
Tensor lerp_axis0(const Tensor& x, const std::vector<double>& positions);

// ---- convolution ----------------------------------------------------------
/// Strided 3D convolution with stride == kernel extent (patchify).
/// x: [T,C,H,W]; kernel: [E, C*pt*ph*pw]; bias: [E].
/// Returns tokens [Nt*Nh*Nw, E] with t-major, then h, then w ordering.
Tensor patchify_conv3d(const Tensor& x, const Tensor& kernel, const Tensor& bias,
                       int64_t pt, int64_t ph, int64_t pw);

// ---- extension point ------------------------------------------------------
/// Emits a tensor with the given value, recording a custom backward on the
/// active tape when any input requires gradients. This is how domain modules
/// (e.g. the hash encoding) add differentiable primitives.
Tensor emit_custom(std::vector<int64_t> shape, std::vector<double> data,
                   std::span<const Tensor> inputs, BackwardFn backward);

/// nRMSE = ||pred - target||_2 / ||target||_2 over all entries. When the
/// target norm is ~0 the denominator is epsilon-guarded and the ZeroTarget
/// condition is reported through the optional flag.
Tensor nrmse(const Tensor& pred, const Tensor& target, bool* zero_target = nullptr);

}  // namespace fluidfm::tensor
