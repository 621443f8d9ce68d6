#include "fluidfm/tensor/ops.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "fluidfm/util/errors.hpp"

namespace fluidfm::tensor {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

std::vector<int64_t> strides_of(const std::vector<int64_t>& shape) {
  std::vector<int64_t> s(shape.size(), 1);
  for (int i = static_cast<int>(shape.size()) - 2; i >= 0; --i) {
    s[size_t(i)] = s[size_t(i) + 1] * shape[size_t(i) + 1];
  }
  return s;
}

/// Emits an op result, recording it on the active tape when gradients are
/// requested by any input.
Tensor emit(std::vector<int64_t> shape, std::vector<double> data,
            std::span<const Tensor> inputs, BackwardFn fn) {
  Tape* tape = active_tape();
  bool track = false;
  if (tape) {
    for (const Tensor& t : inputs) {
      if (t.requires_grad()) {
        track = true;
        break;
      }
    }
  }
  Tensor out = make_tensor(std::move(shape), std::move(data), track);
  if (track) {
    std::vector<int> ids;
    ids.reserve(inputs.size());
    for (const Tensor& t : inputs) {
      ids.push_back(t.requires_grad() ? tape->ensure_leaf(t) : -1);
    }
    tape->record(std::move(ids), std::move(fn), out);
  }
  return out;
}

Tensor emit2(std::vector<int64_t> shape, std::vector<double> data, const Tensor& a,
             const Tensor& b, BackwardFn fn) {
  const Tensor in[2] = {a, b};
  return emit(std::move(shape), std::move(data), std::span<const Tensor>(in, 2),
              std::move(fn));
}

Tensor emit1(std::vector<int64_t> shape, std::vector<double> data, const Tensor& a,
             BackwardFn fn) {
  const Tensor in[1] = {a};
  return emit(std::move(shape), std::move(data), std::span<const Tensor>(in, 1),
              std::move(fn));
}

/// Row-major GEMM honoring the active precision mode: F32 runs in single
/// precision, matching 32-bit storage semantics.
void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, const double* a,
          const double* b, double* c) {
  const auto M = static_cast<int>(m), N = static_cast<int>(n), K = static_cast<int>(k);
  const int lda = static_cast<int>(trans_a ? m : k);
  const int ldb = static_cast<int>(trans_b ? k : n);
  if (scalar_mode() == Scalar::F32) {
    const size_t na = size_t(m) * size_t(k), nb = size_t(k) * size_t(n);
    std::vector<float> fa(na), fb(nb), fc(size_t(m) * size_t(n));
    for (size_t i = 0; i < na; ++i) fa[i] = static_cast<float>(a[i]);
    for (size_t i = 0; i < nb; ++i) fb[i] = static_cast<float>(b[i]);
    cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, M, N, K, 1.0f, fa.data(), lda,
                fb.data(), ldb, 0.0f, fc.data(), N);
    for (size_t i = 0; i < fc.size(); ++i) c[i] = static_cast<double>(fc[i]);
  } else {
    cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, M, N, K, 1.0, a, lda, b, ldb, 0.0, c,
                N);
  }
}

struct BlasInit {
  BlasInit() { openblas_set_num_threads(1); }
};
const BlasInit g_blas_init;  // parallelism lives above the tensor layer

enum class Broadcast { None, LeftScalar, RightScalar };

Broadcast binary_broadcast(const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return Broadcast::None;
  if (a.size() == 1) return Broadcast::LeftScalar;
  if (b.size() == 1) return Broadcast::RightScalar;
  raise(Err::ShapeMismatch, "binary op requires equal shapes or a scalar operand");
}

/// Generic elementwise binary op with scalar broadcast. PartialA/PartialB
/// produce d(out)/d(a) and d(out)/d(b) from the saved operand values.
template <class F, class DA, class DB>
Tensor binary_op(const Tensor& a, const Tensor& b, F f, DA dfda, DB dfdb) {
  const Broadcast bc = binary_broadcast(a, b);
  const std::vector<int64_t>& shape = bc == Broadcast::LeftScalar ? b.shape() : a.shape();
  const int64_t n = bc == Broadcast::LeftScalar ? b.size() : a.size();
  std::vector<double> out(static_cast<size_t>(n));
  const auto& av = a.data();
  const auto& bv = b.data();
  for (int64_t i = 0; i < n; ++i) {
    const double x = bc == Broadcast::LeftScalar ? av[0] : av[size_t(i)];
    const double y = bc == Broadcast::RightScalar ? bv[0] : bv[size_t(i)];
    out[size_t(i)] = f(x, y);
  }
  return emit2(shape, std::move(out), a, b,
               [a, b, bc, dfda, dfdb, n](const Tensor& g) -> std::vector<Tensor> {
                 const auto& gv = g.data();
                 const auto& av = a.data();
                 const auto& bv = b.data();
                 std::vector<double> ga(a.data().size(), 0.0), gb(b.data().size(), 0.0);
                 for (int64_t i = 0; i < n; ++i) {
                   const double x = bc == Broadcast::LeftScalar ? av[0] : av[size_t(i)];
                   const double y = bc == Broadcast::RightScalar ? bv[0] : bv[size_t(i)];
                   const double gi = gv[size_t(i)];
                   if (bc == Broadcast::LeftScalar) {
                     ga[0] += gi * dfda(x, y);
                   } else {
                     ga[size_t(i)] = gi * dfda(x, y);
                   }
                   if (bc == Broadcast::RightScalar) {
                     gb[0] += gi * dfdb(x, y);
                   } else {
                     gb[size_t(i)] = gi * dfdb(x, y);
                   }
                 }
                 return {make_tensor(a.shape(), std::move(ga)),
                         make_tensor(b.shape(), std::move(gb))};
               });
}

/// Generic elementwise unary op; Partial produces d(out)/d(x) from (x, y).
template <class F, class D>
Tensor unary_op(const Tensor& x, F f, D dfdx) {
  const int64_t n = x.size();
  std::vector<double> out(static_cast<size_t>(n));
  const auto& xv = x.data();
  for (int64_t i = 0; i < n; ++i) out[size_t(i)] = f(xv[size_t(i)]);
  Tensor y = make_tensor(x.shape(), out);  // reused by the closure for (x,y) partials
  Tape* tape = active_tape();
  if (!tape || !x.requires_grad()) return y;
  std::vector<double> data = y.data();
  return emit1(x.shape(), std::move(data), x,
               [x, y, dfdx, n](const Tensor& g) -> std::vector<Tensor> {
                 const auto& gv = g.data();
                 const auto& xv = x.data();
                 const auto& yv = y.data();
                 std::vector<double> gx(static_cast<size_t>(n));
                 for (int64_t i = 0; i < n; ++i) {
                   gx[size_t(i)] = gv[size_t(i)] * dfdx(xv[size_t(i)], yv[size_t(i)]);
                 }
                 return {make_tensor(x.shape(), std::move(gx))};
               });
}

double guarded_div(double a, double b) {
  const double d = std::abs(b) < 1e-300 ? (b < 0 ? -1e-300 : 1e-300) : b;
  return a / d;
}

}  // namespace

// ---- elementwise -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, [](double x, double y) { return guarded_div(x, y); },
      [](double, double y) { return guarded_div(1.0, y); },
      [](double x, double y) { return -guarded_div(x, y * y); });
}

Tensor neg(const Tensor& x) {
  return unary_op(
      x, [](double v) { return -v; }, [](double, double) { return -1.0; });
}

Tensor exp(const Tensor& x) {
  return unary_op(
      x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary_op(
      x, [](double v) { return std::log(std::max(v, 1e-300)); },
      [](double v, double) { return 1.0 / std::max(v, 1e-300); });
}

Tensor pow_scalar(const Tensor& x, double p) {
  return unary_op(
      x,
      [p](double v) {
        if (p == 2.0) return v * v;
        if (p == 0.5) return std::sqrt(std::max(v, 0.0));
        return std::pow(v, p);
      },
      [p](double v, double) {
        if (p == 2.0) return 2.0 * v;
        if (p == 0.5) return 0.5 / std::sqrt(std::max(v, 1e-300));
        return p * std::pow(v, p - 1.0);
      });
}

Tensor mul_scalar(const Tensor& x, double c) {
  return unary_op(
      x, [c](double v) { return c * v; }, [c](double, double) { return c; });
}

Tensor add_scalar(const Tensor& x, double c) {
  return unary_op(
      x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

Tensor relu(const Tensor& x) {
  return unary_op(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& x) {
  return unary_op(
      x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); },
      [](double v, double) {
        const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
        return cdf + v * pdf;
      });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(
      x,
      [](double v) { return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor softplus(const Tensor& x) {
  return unary_op(
      x,
      [](double v) {
        if (v > 30.0) return v;
        if (v < -30.0) return std::exp(v);
        return std::log1p(std::exp(v));
      },
      [](double v, double) {
        return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
      });
}

Tensor erf(const Tensor& x) {
  constexpr double kTwoOverSqrtPi = 1.12837916709551257390;
  return unary_op(
      x, [](double v) { return std::erf(v); },
      [](double v, double) { return kTwoOverSqrtPi * std::exp(-v * v); });
}

// ---- reductions ------------------------------------------------------------

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  return emit1({}, {acc}, x, [x](const Tensor& g) -> std::vector<Tensor> {
    const double gv = g.data()[0];
    return {make_tensor(x.shape(), std::vector<double>(size_t(x.size()), gv))};
  });
}

namespace {

/// Shared machinery for sum/mean over an axis subset.
Tensor reduce_axes(const Tensor& x, std::vector<int64_t> axes, bool keepdims, bool is_mean) {
  const auto& shape = x.shape();
  const int r = x.rank();
  std::vector<bool> reduced(size_t(r), false);
  for (int64_t a : axes) {
    require(a >= 0 && a < r, Err::InvalidAttr, "reduction axis out of range");
    reduced[size_t(a)] = true;
  }
  std::vector<int64_t> out_shape;
  int64_t count = 1;
  for (int i = 0; i < r; ++i) {
    if (reduced[size_t(i)]) {
      count *= shape[size_t(i)];
      if (keepdims) out_shape.push_back(1);
    } else {
      out_shape.push_back(shape[size_t(i)]);
    }
  }
  const auto in_strides = strides_of(shape);
  std::vector<int64_t> out_strides_for_in(size_t(r), 0);
  {
    // stride of each non-reduced input axis within the output
    std::vector<int64_t> kept;
    for (int i = 0; i < r; ++i) {
      if (!reduced[size_t(i)]) kept.push_back(shape[size_t(i)]);
    }
    auto ks = strides_of(kept);
    size_t j = 0;
    for (int i = 0; i < r; ++i) {
      if (!reduced[size_t(i)]) out_strides_for_in[size_t(i)] = ks[j++];
    }
  }
  const int64_t out_n = shape_size(out_shape);
  std::vector<double> out(size_t(out_n), 0.0);
  const auto& xv = x.data();
  const int64_t n = x.size();
  for (int64_t idx = 0; idx < n; ++idx) {
    int64_t rem = idx, oidx = 0;
    for (int i = 0; i < r; ++i) {
      const int64_t c = rem / in_strides[size_t(i)];
      rem %= in_strides[size_t(i)];
      oidx += c * out_strides_for_in[size_t(i)];
    }
    out[size_t(oidx)] += xv[size_t(idx)];
  }
  if (is_mean) {
    for (double& v : out) v /= double(count);
  }
  const double scale = is_mean ? 1.0 / double(count) : 1.0;
  return emit1(out_shape, std::move(out), x,
               [x, in_strides, out_strides_for_in, r, scale](const Tensor& g)
                   -> std::vector<Tensor> {
                 const auto& gv = g.data();
                 const int64_t n = x.size();
                 std::vector<double> gx(static_cast<size_t>(n));
                 for (int64_t idx = 0; idx < n; ++idx) {
                   int64_t rem = idx, oidx = 0;
                   for (int i = 0; i < r; ++i) {
                     const int64_t c = rem / in_strides[size_t(i)];
                     rem %= in_strides[size_t(i)];
                     oidx += c * out_strides_for_in[size_t(i)];
                   }
                   gx[size_t(idx)] = gv[size_t(oidx)] * scale;
                 }
                 return {make_tensor(x.shape(), std::move(gx))};
               });
}

}  // namespace

Tensor sum(const Tensor& x, std::vector<int64_t> axes, bool keepdims) {
  return reduce_axes(x, std::move(axes), keepdims, false);
}

Tensor mean(const Tensor& x) {
  Tensor s = sum(x);
  return mul_scalar(s, 1.0 / double(std::max<int64_t>(x.size(), 1)));
}

Tensor mean(const Tensor& x, std::vector<int64_t> axes, bool keepdims) {
  return reduce_axes(x, std::move(axes), keepdims, true);
}

Tensor cumsum_last(const Tensor& x, bool exclusive) {
  const int64_t last = x.rank() == 0 ? 1 : x.shape().back();
  const int64_t rows = x.size() / std::max<int64_t>(last, 1);
  std::vector<double> out(size_t(x.size()));
  const auto& xv = x.data();
  for (int64_t row = 0; row < rows; ++row) {
    double acc = 0.0;
    const int64_t base = row * last;
    for (int64_t j = 0; j < last; ++j) {
      if (exclusive) {
        out[size_t(base + j)] = acc;
        acc += xv[size_t(base + j)];
      } else {
        acc += xv[size_t(base + j)];
        out[size_t(base + j)] = acc;
      }
    }
  }
  return emit1(x.shape(), std::move(out), x,
               [x, rows, last, exclusive](const Tensor& g) -> std::vector<Tensor> {
                 const auto& gv = g.data();
                 std::vector<double> gx(size_t(x.size()));
                 for (int64_t row = 0; row < rows; ++row) {
                   double acc = 0.0;
                   const int64_t base = row * last;
                   for (int64_t j = last - 1; j >= 0; --j) {
                     if (exclusive) {
                       gx[size_t(base + j)] = acc;
                       acc += gv[size_t(base + j)];
                     } else {
                       acc += gv[size_t(base + j)];
                       gx[size_t(base + j)] = acc;
                     }
                   }
                 }
                 return {make_tensor(x.shape(), std::move(gx))};
               });
}

// ---- linear algebra ---------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2, Err::ShapeMismatch, "matmul expects rank-2");
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  require(b.dim(0) == k, Err::ShapeMismatch, "matmul inner extents differ");
  std::vector<double> out(static_cast<size_t>(m * n));
  gemm(false, false, m, n, k, a.data().data(), b.data().data(), out.data());
  return emit2({m, n}, std::move(out), a, b,
               [a, b, m, n, k](const Tensor& g) -> std::vector<Tensor> {
                 std::vector<double> ga(size_t(m * k)), gb(static_cast<size_t>(k * n));
                 gemm(false, true, m, k, n, g.data().data(), b.data().data(), ga.data());
                 gemm(true, false, k, n, m, a.data().data(), g.data().data(), gb.data());
                 return {make_tensor(a.shape(), std::move(ga)),
                         make_tensor(b.shape(), std::move(gb))};
               });
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  require(a.rank() >= 3 && b.rank() == a.rank(), Err::ShapeMismatch, "bmm expects rank>=3");
  const int r = a.rank();
  int64_t batch = 1;
  for (int i = 0; i < r - 2; ++i) {
    require(a.dim(i) == b.dim(i), Err::ShapeMismatch, "bmm batch extents differ");
    batch *= a.dim(i);
  }
  const int64_t m = a.dim(r - 2), k = a.dim(r - 1), n = b.dim(r - 1);
  require(b.dim(r - 2) == k, Err::ShapeMismatch, "bmm inner extents differ");
  std::vector<int64_t> out_shape(a.shape());
  out_shape[size_t(r) - 1] = n;
  std::vector<double> out(static_cast<size_t>(batch * m * n));
  for (int64_t i = 0; i < batch; ++i) {
    gemm(false, false, m, n, k, a.data().data() + i * m * k, b.data().data() + i * k * n,
         out.data() + i * m * n);
  }
  return emit2(out_shape, std::move(out), a, b,
               [a, b, batch, m, n, k](const Tensor& g) -> std::vector<Tensor> {
                 std::vector<double> ga(size_t(batch * m * k)), gb(static_cast<size_t>(batch * k * n));
                 for (int64_t i = 0; i < batch; ++i) {
                   gemm(false, true, m, k, n, g.data().data() + i * m * n,
                        b.data().data() + i * k * n, ga.data() + i * m * k);
                   gemm(true, false, k, n, m, a.data().data() + i * m * k,
                        g.data().data() + i * m * n, gb.data() + i * k * n);
                 }
                 return {make_tensor(a.shape(), std::move(ga)),
                         make_tensor(b.shape(), std::move(gb))};
               });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require(bias.rank() == 1 && x.rank() >= 1, Err::ShapeMismatch, "add_bias shapes");
  const int64_t d = bias.dim(0);
  require(x.shape().back() == d, Err::ShapeMismatch, "add_bias last extent mismatch");
  const int64_t rows = x.size() / d;
  std::vector<double> out(size_t(x.size()));
  const auto& xv = x.data();
  const auto& bv = bias.data();
  for (int64_t r = 0; r < rows; ++r) {
    for (int64_t j = 0; j < d; ++j) out[size_t(r * d + j)] = xv[size_t(r * d + j)] + bv[size_t(j)];
  }
  return emit2(x.shape(), std::move(out), x, bias,
               [x, bias, rows, d](const Tensor& g) -> std::vector<Tensor> {
                 std::vector<double> gb(size_t(d), 0.0);
                 const auto& gv = g.data();
                 for (int64_t r = 0; r < rows; ++r) {
                   for (int64_t j = 0; j < d; ++j) gb[size_t(j)] += gv[size_t(r * d + j)];
                 }
                 return {make_tensor(x.shape(), std::vector<double>(gv)),
                         make_tensor(bias.shape(), std::move(gb))};
               });
}

// ---- shape ------------------------------------------------------------------

Tensor reshape(const Tensor& x, std::vector<int64_t> shape) {
  require(shape_size(shape) == x.size(), Err::ShapeMismatch, "reshape size mismatch");
  std::vector<double> data = x.data();
  return emit1(std::move(shape), std::move(data), x,
               [x](const Tensor& g) -> std::vector<Tensor> {
                 return {make_tensor(x.shape(), std::vector<double>(g.data()))};
               });
}

namespace {

std::vector<double> permute_data(const std::vector<double>& xv,
                                 const std::vector<int64_t>& shape,
                                 const std::vector<int64_t>& perm) {
  const int r = static_cast<int>(shape.size());
  std::vector<int64_t> out_shape(static_cast<size_t>(r));
  for (int i = 0; i < r; ++i) out_shape[size_t(i)] = shape[size_t(perm[size_t(i)])];
  const auto in_strides = strides_of(shape);
  const auto out_strides = strides_of(out_shape);
  std::vector<int64_t> stride_map(static_cast<size_t>(r));
  for (int i = 0; i < r; ++i) stride_map[size_t(perm[size_t(i)])] = out_strides[size_t(i)];
  std::vector<double> out(xv.size());
  const int64_t n = static_cast<int64_t>(xv.size());
  for (int64_t idx = 0; idx < n; ++idx) {
    int64_t rem = idx, oidx = 0;
    for (int i = 0; i < r; ++i) {
      const int64_t c = rem / in_strides[size_t(i)];
      rem %= in_strides[size_t(i)];
      oidx += c * stride_map[size_t(i)];
    }
    out[size_t(oidx)] = xv[size_t(idx)];
  }
  return out;
}

}  // namespace

Tensor transpose(const Tensor& x, std::vector<int64_t> perm) {
  const int r = x.rank();
  require(static_cast<int>(perm.size()) == r, Err::InvalidAttr, "transpose perm rank");
  std::vector<bool> seen(size_t(r), false);
  for (int64_t p : perm) {
    require(p >= 0 && p < r && !seen[size_t(p)], Err::InvalidAttr, "transpose perm invalid");
    seen[size_t(p)] = true;
  }
  std::vector<int64_t> out_shape(static_cast<size_t>(r));
  for (int i = 0; i < r; ++i) out_shape[size_t(i)] = x.dim(static_cast<int>(perm[size_t(i)]));
  std::vector<double> out = permute_data(x.data(), x.shape(), perm);
  return emit1(out_shape, std::move(out), x,
               [x, perm, out_shape](const Tensor& g) -> std::vector<Tensor> {
                 // inverse permutation
                 std::vector<int64_t> inv(perm.size());
                 for (size_t i = 0; i < perm.size(); ++i) inv[size_t(perm[i])] = int64_t(i);
                 std::vector<double> gx = permute_data(g.data(), out_shape, inv);
                 return {make_tensor(x.shape(), std::move(gx))};
               });
}

Tensor slice(const Tensor& x, int axis, int64_t start, int64_t len) {
  const int r = x.rank();
  require(axis >= 0 && axis < r, Err::InvalidAttr, "slice axis out of range");
  require(start >= 0 && len >= 0 && start + len <= x.dim(axis), Err::InvalidAttr,
          "slice bounds out of range");
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= x.dim(i);
  for (int i = axis + 1; i < r; ++i) inner *= x.dim(i);
  const int64_t d = x.dim(axis);
  std::vector<int64_t> out_shape = x.shape();
  out_shape[size_t(axis)] = len;
  std::vector<double> out(static_cast<size_t>(outer * len * inner));
  const auto& xv = x.data();
  for (int64_t o = 0; o < outer; ++o) {
    std::memcpy(out.data() + o * len * inner, xv.data() + (o * d + start) * inner,
                size_t(len * inner) * sizeof(double));
  }
  return emit1(out_shape, std::move(out), x,
               [x, outer, inner, d, start, len](const Tensor& g) -> std::vector<Tensor> {
                 std::vector<double> gx(size_t(x.size()), 0.0);
                 const auto& gv = g.data();
                 for (int64_t o = 0; o < outer; ++o) {
                   std::memcpy(gx.data() + (o * d + start) * inner,
                               gv.data() + o * len * inner,
                               size_t(len * inner) * sizeof(double));
                 }
                 return {make_tensor(x.shape(), std::move(gx))};
               });
}

Tensor concat(std::span<const Tensor> xs, int axis) {
  require(!xs.empty(), Err::InvalidAttr, "concat of nothing");
  const int r = xs[0].rank();
  require(axis >= 0 && axis < r, Err::InvalidAttr, "concat axis out of range");
  int64_t total = 0;
  for (const Tensor& t : xs) {
    require(t.rank() == r, Err::ShapeMismatch, "concat rank mismatch");
    for (int i = 0; i < r; ++i) {
      if (i != axis) {
        require(t.dim(i) == xs[0].dim(i), Err::ShapeMismatch, "concat extent mismatch");
      }
    }
    total += t.dim(axis);
  }
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= xs[0].dim(i);
  for (int i = axis + 1; i < r; ++i) inner *= xs[0].dim(i);
  std::vector<int64_t> out_shape = xs[0].shape();
  out_shape[size_t(axis)] = total;
  std::vector<double> out(static_cast<size_t>(outer * total * inner));
  int64_t offset = 0;
  for (const Tensor& t : xs) {
    const int64_t d = t.dim(axis);
    for (int64_t o = 0; o < outer; ++o) {
      std::memcpy(out.data() + (o * total + offset) * inner, t.data().data() + o * d * inner,
                  size_t(d * inner) * sizeof(double));
    }
    offset += d;
  }
  std::vector<Tensor> saved(xs.begin(), xs.end());
  return emit(out_shape, std::move(out), xs,
              [saved, outer, inner, total, axis](const Tensor& g) -> std::vector<Tensor> {
                std::vector<Tensor> grads;
                grads.reserve(saved.size());
                const auto& gv = g.data();
                int64_t offset = 0;
                for (const Tensor& t : saved) {
                  const int64_t d = t.dim(axis);
                  std::vector<double> gt(size_t(t.size()));
                  for (int64_t o = 0; o < outer; ++o) {
                    std::memcpy(gt.data() + o * d * inner,
                                gv.data() + (o * total + offset) * inner,
                                size_t(d * inner) * sizeof(double));
                  }
                  grads.push_back(make_tensor(t.shape(), std::move(gt)));
                  offset += d;
                }
                return grads;
              });
}

Tensor gather_rows(const Tensor& x, std::vector<int64_t> indices) {
  require(x.rank() >= 1, Err::ShapeMismatch, "gather_rows needs rank>=1");
  const int64_t n = x.dim(0);
  const int64_t inner = x.size() / std::max<int64_t>(n, 1);
  for (int64_t i : indices) {
    require(i >= 0 && i < n, Err::InvalidAttr, "gather index out of range");
  }
  std::vector<int64_t> out_shape = x.shape();
  out_shape[0] = static_cast<int64_t>(indices.size());
  std::vector<double> out(indices.size() * size_t(inner));
  const auto& xv = x.data();
  for (size_t i = 0; i < indices.size(); ++i) {
    std::memcpy(out.data() + int64_t(i) * inner, xv.data() + indices[i] * inner,
                size_t(inner) * sizeof(double));
  }
  return emit1(out_shape, std::move(out), x,
               [x, indices, inner](const Tensor& g) -> std::vector<Tensor> {
                 std::vector<double> gx(size_t(x.size()), 0.0);
                 const auto& gv = g.data();
                 for (size_t i = 0; i < indices.size(); ++i) {
                   double* dst = gx.data() + indices[i] * inner;
                   const double* src = gv.data() + int64_t(i) * inner;
                   for (int64_t j = 0; j < inner; ++j) dst[j] += src[j];
                 }
                 return {make_tensor(x.shape(), std::move(gx))};
               });
}

Tensor repeat_leading(const Tensor& x, int64_t n) {
  require(n >= 1, Err::InvalidAttr, "repeat_leading needs n >= 1");
  std::vector<int64_t> out_shape;
  out_shape.push_back(n);
  for (int64_t d : x.shape()) out_shape.push_back(d);
  const int64_t sz = x.size();
  std::vector<double> out(static_cast<size_t>(n * sz));
  for (int64_t i = 0; i < n; ++i) {
    std::memcpy(out.data() + i * sz, x.data().data(), size_t(sz) * sizeof(double));
  }
  return emit1(out_shape, std::move(out), x,
               [x, n, sz](const Tensor& g) -> std::vector<Tensor> {
                 std::vector<double> gx(size_t(sz), 0.0);
                 const auto& gv = g.data();
                 for (int64_t i = 0; i < n; ++i) {
                   const double* src = gv.data() + i * sz;
                   for (int64_t j = 0; j < sz; ++j) gx[size_t(j)] += src[j];
                 }
                 return {make_tensor(x.shape(), std::move(gx))};
               });
}

// ---- normalization & attention ----------------------------------------------

Tensor softmax_last(const Tensor& x) {
  const int64_t last = x.rank() == 0 ? 1 : x.shape().back();
  const int64_t rows = x.size() / std::max<int64_t>(last, 1);
  std::vector<double> out(size_t(x.size()));
  const auto& xv = x.data();
  for (int64_t r = 0; r < rows; ++r) {
    const int64_t base = r * last;
    double mx = -1e300;
    for (int64_t j = 0; j < last; ++j) mx = std::max(mx, xv[size_t(base + j)]);
    double denom = 0.0;
    for (int64_t j = 0; j < last; ++j) {
      const double e = std::exp(xv[size_t(base + j)] - mx);
      out[size_t(base + j)] = e;
      denom += e;
    }
    for (int64_t j = 0; j < last; ++j) out[size_t(base + j)] /= denom;
  }
  Tensor y = make_tensor(x.shape(), out);
  std::vector<double> data = y.data();
  return emit1(x.shape(), std::move(data), x,
               [x, y, rows, last](const Tensor& g) -> std::vector<Tensor> {
                 const auto& gv = g.data();
                 const auto& yv = y.data();
                 std::vector<double> gx(size_t(x.size()));
                 for (int64_t r = 0; r < rows; ++r) {
                   const int64_t base = r * last;
                   double dot = 0.0;
                   for (int64_t j = 0; j < last; ++j) {
                     dot += gv[size_t(base + j)] * yv[size_t(base + j)];
                   }
                   for (int64_t j = 0; j < last; ++j) {
                     gx[size_t(base + j)] = (gv[size_t(base + j)] - dot) * yv[size_t(base + j)];
                   }
                 }
                 return {make_tensor(x.shape(), std::move(gx))};
               });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const int64_t d = x.shape().back();
  require(gamma.rank() == 1 && gamma.dim(0) == d, Err::ShapeMismatch, "layer_norm gamma");
  require(beta.rank() == 1 && beta.dim(0) == d, Err::ShapeMismatch, "layer_norm beta");
  const int64_t rows = x.size() / d;
  std::vector<double> out(size_t(x.size()));
  std::vector<double> xhat(size_t(x.size()));
  std::vector<double> inv_std(static_cast<size_t>(rows));
  const auto& xv = x.data();
  const auto& gv = gamma.data();
  const auto& bv = beta.data();
  for (int64_t r = 0; r < rows; ++r) {
    const int64_t base = r * d;
    double mu = 0.0;
    for (int64_t j = 0; j < d; ++j) mu += xv[size_t(base + j)];
    mu /= double(d);
    double var = 0.0;
    for (int64_t j = 0; j < d; ++j) {
      const double c = xv[size_t(base + j)] - mu;
      var += c * c;
    }
    var /= double(d);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[size_t(r)] = is;
    for (int64_t j = 0; j < d; ++j) {
      const double xh = (xv[size_t(base + j)] - mu) * is;
      xhat[size_t(base + j)] = xh;
      out[size_t(base + j)] = xh * gv[size_t(j)] + bv[size_t(j)];
    }
  }
  auto xhat_sp = std::make_shared<std::vector<double>>(std::move(xhat));
  auto istd_sp = std::make_shared<std::vector<double>>(std::move(inv_std));
  const Tensor in[3] = {x, gamma, beta};
  return emit(x.shape(), std::move(out), std::span<const Tensor>(in, 3),
              [x, gamma, rows, d, xhat_sp, istd_sp](const Tensor& g) -> std::vector<Tensor> {
                const auto& gv = g.data();
                const auto& gam = gamma.data();
                const auto& xh = *xhat_sp;
                const auto& istd = *istd_sp;
                std::vector<double> gx(size_t(x.size()));
                std::vector<double> ggamma(size_t(d), 0.0);
                std::vector<double> gbeta(size_t(d), 0.0);
                for (int64_t r = 0; r < rows; ++r) {
                  const int64_t base = r * d;
                  double m1 = 0.0, m2 = 0.0;
                  for (int64_t j = 0; j < d; ++j) {
                    const double gh = gv[size_t(base + j)] * gam[size_t(j)];
                    m1 += gh;
                    m2 += gh * xh[size_t(base + j)];
                  }
                  m1 /= double(d);
                  m2 /= double(d);
                  for (int64_t j = 0; j < d; ++j) {
                    const double gh = gv[size_t(base + j)] * gam[size_t(j)];
                    gx[size_t(base + j)] =
                        (gh - m1 - xh[size_t(base + j)] * m2) * istd[size_t(r)];
                    ggamma[size_t(j)] += gv[size_t(base + j)] * xh[size_t(base + j)];
                    gbeta[size_t(j)] += gv[size_t(base + j)];
                  }
                }
                return {make_tensor(x.shape(), std::move(gx)),
                        make_tensor(gamma.shape(), std::move(ggamma)),
                        make_tensor(gamma.shape(), std::move(gbeta))};
              });
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, double scale,
                 const std::optional<Tensor>& mask, const std::optional<Tensor>& bias) {
  require(q.rank() == 3 && k.rank() == 3 && v.rank() == 3, Err::ShapeMismatch,
          "attention expects [B,n,d]");
  Tensor logits = mul_scalar(bmm(q, transpose(k, {0, 2, 1})), scale);
  if (bias.has_value()) {
    require(bias->shape() == logits.shape(), Err::ShapeMismatch, "attention bias shape");
    logits = add(logits, *bias);
  }
  if (mask.has_value()) {
    require(mask->shape() == logits.shape(), Err::ShapeMismatch, "attention mask shape");
    logits = add(logits, mask->detached());
  }
  return bmm(softmax_last(logits), v);
}

// ---- interpolation -----------------------------------------------------------

Tensor bilinear_sample(const Tensor& grid, const Tensor& pts) {
  require(grid.rank() == 3, Err::ShapeMismatch, "bilinear_sample grid must be [H,W,C]");
  require(pts.rank() == 2 && pts.dim(1) == 2, Err::ShapeMismatch,
          "bilinear_sample pts must be [N,2]");
  const int64_t H = grid.dim(0), W = grid.dim(1), C = grid.dim(2);
  const int64_t N = pts.dim(0);
  std::vector<double> out(static_cast<size_t>(N * C));
  const auto& gvv = grid.data();
  const auto& pv = pts.data();
  // corner weights recomputed in backward; save nothing but the inputs
  auto sample_loop = [&](const double* gsrc, double* dst) {
    for (int64_t i = 0; i < N; ++i) {
      double r = std::clamp(pv[size_t(2 * i)], 0.0, double(H - 1));
      double c = std::clamp(pv[size_t(2 * i + 1)], 0.0, double(W - 1));
      int64_t r0 = std::min<int64_t>(int64_t(r), H - 2 < 0 ? 0 : H - 2);
      int64_t c0 = std::min<int64_t>(int64_t(c), W - 2 < 0 ? 0 : W - 2);
      const double fr = r - double(r0), fc = c - double(c0);
      const int64_t r1 = std::min(r0 + 1, H - 1), c1 = std::min(c0 + 1, W - 1);
      for (int64_t ch = 0; ch < C; ++ch) {
        const double v00 = gsrc[(r0 * W + c0) * C + ch];
        const double v01 = gsrc[(r0 * W + c1) * C + ch];
        const double v10 = gsrc[(r1 * W + c0) * C + ch];
        const double v11 = gsrc[(r1 * W + c1) * C + ch];
        dst[i * C + ch] = (1 - fr) * ((1 - fc) * v00 + fc * v01) +
                          fr * ((1 - fc) * v10 + fc * v11);
      }
    }
  };
  sample_loop(gvv.data(), out.data());
  return emit2({N, C}, std::move(out), grid, pts,
               [grid, pts, H, W, C, N](const Tensor& g) -> std::vector<Tensor> {
                 // gradients to grid values only (coordinate gradients are the
                 // hash-encoding path's job)
                 std::vector<double> gg(size_t(grid.size()), 0.0);
                 const auto& gv = g.data();
                 const auto& pv = pts.data();
                 for (int64_t i = 0; i < N; ++i) {
                   double r = std::clamp(pv[size_t(2 * i)], 0.0, double(H - 1));
                   double c = std::clamp(pv[size_t(2 * i + 1)], 0.0, double(W - 1));
                   int64_t r0 = std::min<int64_t>(int64_t(r), H - 2 < 0 ? 0 : H - 2);
                   int64_t c0 = std::min<int64_t>(int64_t(c), W - 2 < 0 ? 0 : W - 2);
                   const double fr = r - double(r0), fc = c - double(c0);
                   const int64_t r1 = std::min(r0 + 1, H - 1), c1 = std::min(c0 + 1, W - 1);
                   for (int64_t ch = 0; ch < C; ++ch) {
                     const double go = gv[size_t(i * C + ch)];
                     gg[size_t((r0 * W + c0) * C + ch)] += go * (1 - fr) * (1 - fc);
                     gg[size_t((r0 * W + c1) * C + ch)] += go * (1 - fr) * fc;
                     gg[size_t((r1 * W + c0) * C + ch)] += go * fr * (1 - fc);
                     gg[size_t((r1 * W + c1) * C + ch)] += go * fr * fc;
                   }
                 }
                 return {make_tensor(grid.shape(), std::move(gg)), Tensor()};
               });
}

Tensor trilinear_sample(const Tensor& grid, const Tensor& pts) {
  require(grid.rank() == 4, Err::ShapeMismatch, "trilinear_sample grid must be [D,H,W,C]");
  require(pts.rank() == 2 && pts.dim(1) == 3, Err::ShapeMismatch,
          "trilinear_sample pts must be [N,3]");
  const int64_t D = grid.dim(0), H = grid.dim(1), W = grid.dim(2), C = grid.dim(3);
  const int64_t N = pts.dim(0);
  std::vector<double> out(static_cast<size_t>(N * C));
  const auto& gvv = grid.data();
  const auto& pv = pts.data();
  for (int64_t i = 0; i < N; ++i) {
    const double dz = std::clamp(pv[size_t(3 * i)], 0.0, double(D - 1));
    const double hy = std::clamp(pv[size_t(3 * i + 1)], 0.0, double(H - 1));
    const double wx = std::clamp(pv[size_t(3 * i + 2)], 0.0, double(W - 1));
    const int64_t d0 = std::min<int64_t>(int64_t(dz), std::max<int64_t>(D - 2, 0));
    const int64_t h0 = std::min<int64_t>(int64_t(hy), std::max<int64_t>(H - 2, 0));
    const int64_t w0 = std::min<int64_t>(int64_t(wx), std::max<int64_t>(W - 2, 0));
    const double fd = dz - double(d0), fh = hy - double(h0), fw = wx - double(w0);
    const int64_t d1 = std::min(d0 + 1, D - 1), h1 = std::min(h0 + 1, H - 1),
                  w1 = std::min(w0 + 1, W - 1);
    for (int64_t ch = 0; ch < C; ++ch) {
      auto at = [&](int64_t dd, int64_t hh, int64_t ww) {
        return gvv[size_t(((dd * H + hh) * W + ww) * C + ch)];
      };
      const double c00 = at(d0, h0, w0) * (1 - fw) + at(d0, h0, w1) * fw;
      const double c01 = at(d0, h1, w0) * (1 - fw) + at(d0, h1, w1) * fw;
      const double c10 = at(d1, h0, w0) * (1 - fw) + at(d1, h0, w1) * fw;
      const double c11 = at(d1, h1, w0) * (1 - fw) + at(d1, h1, w1) * fw;
      out[size_t(i * C + ch)] =
          (c00 * (1 - fh) + c01 * fh) * (1 - fd) + (c10 * (1 - fh) + c11 * fh) * fd;
    }
  }
  return emit2({N, C}, std::move(out), grid, pts,
               [grid, pts, D, H, W, C, N](const Tensor& g) -> std::vector<Tensor> {
                 std::vector<double> gg(size_t(grid.size()), 0.0);
                 const auto& gv = g.data();
                 const auto& pv = pts.data();
                 for (int64_t i = 0; i < N; ++i) {
                   const double dz = std::clamp(pv[size_t(3 * i)], 0.0, double(D - 1));
                   const double hy = std::clamp(pv[size_t(3 * i + 1)], 0.0, double(H - 1));
                   const double wx = std::clamp(pv[size_t(3 * i + 2)], 0.0, double(W - 1));
                   const int64_t d0 = std::min<int64_t>(int64_t(dz), std::max<int64_t>(D - 2, 0));
                   const int64_t h0 = std::min<int64_t>(int64_t(hy), std::max<int64_t>(H - 2, 0));
                   const int64_t w0 = std::min<int64_t>(int64_t(wx), std::max<int64_t>(W - 2, 0));
                   const double fd = dz - double(d0), fh = hy - double(h0), fw = wx - double(w0);
                   const int64_t d1 = std::min(d0 + 1, D - 1), h1 = std::min(h0 + 1, H - 1),
                                 w1 = std::min(w0 + 1, W - 1);
                   for (int64_t ch = 0; ch < C; ++ch) {
                     const double go = gv[size_t(i * C + ch)];
                     auto acc = [&](int64_t dd, int64_t hh, int64_t ww, double wgt) {
                       gg[size_t(((dd * H + hh) * W + ww) * C + ch)] += go * wgt;
                     };
                     acc(d0, h0, w0, (1 - fd) * (1 - fh) * (1 - fw));
                     acc(d0, h0, w1, (1 - fd) * (1 - fh) * fw);
                     acc(d0, h1, w0, (1 - fd) * fh * (1 - fw));
                     acc(d0, h1, w1, (1 - fd) * fh * fw);
                     acc(d1, h0, w0, fd * (1 - fh) * (1 - fw));
                     acc(d1, h0, w1, fd * (1 - fh) * fw);
                     acc(d1, h1, w0, fd * fh * (1 - fw));
                     acc(d1, h1, w1, fd * fh * fw);
                   }
                 }
                 return {make_tensor(grid.shape(), std::move(gg)), Tensor()};
               });
}

Tensor lerp_axis0(const Tensor& x, const std::vector<double>& positions) {
  require(x.rank() >= 1, Err::ShapeMismatch, "lerp_axis0 needs rank>=1");
  const int64_t T = x.dim(0);
  const int64_t inner = x.size() / std::max<int64_t>(T, 1);
  const int64_t n = static_cast<int64_t>(positions.size());
  std::vector<int64_t> out_shape = x.shape();
  out_shape[0] = n;
  std::vector<double> out(static_cast<size_t>(n * inner));
  const auto& xv = x.data();
  auto locate = [T](double p, int64_t& k, double& w) {
    p = std::clamp(p, 0.0, double(T - 1));
    k = std::min<int64_t>(int64_t(p), std::max<int64_t>(T - 2, 0));
    w = T == 1 ? 0.0 : p - double(k);
  };
  for (int64_t i = 0; i < n; ++i) {
    int64_t k;
    double w;
    locate(positions[size_t(i)], k, w);
    const int64_t k1 = std::min(k + 1, T - 1);
    for (int64_t j = 0; j < inner; ++j) {
      out[size_t(i * inner + j)] =
          (1.0 - w) * xv[size_t(k * inner + j)] + w * xv[size_t(k1 * inner + j)];
    }
  }
  return emit1(out_shape, std::move(out), x,
               [x, positions, T, inner, n](const Tensor& g) -> std::vector<Tensor> {
                 std::vector<double> gx(size_t(x.size()), 0.0);
                 const auto& gv = g.data();
                 auto locate = [T](double p, int64_t& k, double& w) {
                   p = std::clamp(p, 0.0, double(T - 1));
                   k = std::min<int64_t>(int64_t(p), std::max<int64_t>(T - 2, 0));
                   w = T == 1 ? 0.0 : p - double(k);
                 };
                 for (int64_t i = 0; i < n; ++i) {
                   int64_t k;
                   double w;
                   locate(positions[size_t(i)], k, w);
                   const int64_t k1 = std::min(k + 1, T - 1);
                   for (int64_t j = 0; j < inner; ++j) {
                     gx[size_t(k * inner + j)] += (1.0 - w) * gv[size_t(i * inner + j)];
                     gx[size_t(k1 * inner + j)] += w * gv[size_t(i * inner + j)];
                   }
                 }
                 return {make_tensor(x.shape(), std::move(gx))};
               });
}

// ---- convolution ---------------------------------------------------------------

namespace {

struct PatchGeom {
  int64_t T, C, H, W, pt, ph, pw, Nt, Nh, Nw, N, K;
};

PatchGeom patch_geom(const Tensor& x, int64_t pt, int64_t ph, int64_t pw, int64_t E,
                     int64_t kcols) {
  require(x.rank() == 4, Err::ShapeMismatch, "patchify expects [T,C,H,W]");
  PatchGeom g;
  g.T = x.dim(0);
  g.C = x.dim(1);
  g.H = x.dim(2);
  g.W = x.dim(3);
  g.pt = pt;
  g.ph = ph;
  g.pw = pw;
  require(pt > 0 && ph > 0 && pw > 0, Err::InvalidAttr, "patch extents must be positive");
  require(g.T % pt == 0 && g.H % ph == 0 && g.W % pw == 0, Err::InvalidAttr,
          "input extents must be divisible by patch extents");
  g.Nt = g.T / pt;
  g.Nh = g.H / ph;
  g.Nw = g.W / pw;
  g.N = g.Nt * g.Nh * g.Nw;
  g.K = g.C * pt * ph * pw;
  require(kcols == g.K, Err::ShapeMismatch, "kernel columns must equal C*pt*ph*pw");
  (void)E;
  return g;
}

void im2col(const std::vector<double>& xv, const PatchGeom& g, std::vector<double>& patches) {
  patches.resize(size_t(g.N * g.K));
  for (int64_t tt = 0; tt < g.Nt; ++tt) {
    for (int64_t hh = 0; hh < g.Nh; ++hh) {
      for (int64_t ww = 0; ww < g.Nw; ++ww) {
        const int64_t n = (tt * g.Nh + hh) * g.Nw + ww;
        double* dst = patches.data() + n * g.K;
        int64_t q = 0;
        for (int64_t c = 0; c < g.C; ++c) {
          for (int64_t dt = 0; dt < g.pt; ++dt) {
            for (int64_t dh = 0; dh < g.ph; ++dh) {
              const int64_t t = tt * g.pt + dt;
              const int64_t h = hh * g.ph + dh;
              const double* src =
                  xv.data() + ((t * g.C + c) * g.H + h) * g.W + ww * g.pw;
              for (int64_t dw = 0; dw < g.pw; ++dw) dst[q++] = src[dw];
            }
          }
        }
      }
    }
  }
}

void col2im(const std::vector<double>& patches, const PatchGeom& g, std::vector<double>& xv) {
  xv.assign(size_t(g.T * g.C * g.H * g.W), 0.0);
  for (int64_t tt = 0; tt < g.Nt; ++tt) {
    for (int64_t hh = 0; hh < g.Nh; ++hh) {
      for (int64_t ww = 0; ww < g.Nw; ++ww) {
        const int64_t n = (tt * g.Nh + hh) * g.Nw + ww;
        const double* src = patches.data() + n * g.K;
        int64_t q = 0;
        for (int64_t c = 0; c < g.C; ++c) {
          for (int64_t dt = 0; dt < g.pt; ++dt) {
            for (int64_t dh = 0; dh < g.ph; ++dh) {
              const int64_t t = tt * g.pt + dt;
              const int64_t h = hh * g.ph + dh;
              double* dst = xv.data() + ((t * g.C + c) * g.H + h) * g.W + ww * g.pw;
              for (int64_t dw = 0; dw < g.pw; ++dw) dst[dw] = src[q++];
            }
          }
        }
      }
    }
  }
}

}  // namespace

Tensor patchify_conv3d(const Tensor& x, const Tensor& kernel, const Tensor& bias, int64_t pt,
                       int64_t ph, int64_t pw) {
  require(kernel.rank() == 2, Err::ShapeMismatch, "patchify kernel must be [E,K]");
  const int64_t E = kernel.dim(0);
  require(bias.rank() == 1 && bias.dim(0) == E, Err::ShapeMismatch, "patchify bias");
  const PatchGeom g = patch_geom(x, pt, ph, pw, E, kernel.dim(1));
  std::vector<double> patches;
  im2col(x.data(), g, patches);
  std::vector<double> out(size_t(g.N * E));
  // out = patches [N,K] x kernel^T [K,E]
  gemm(false, true, g.N, E, g.K, patches.data(), kernel.data().data(), out.data());
  const auto& bv = bias.data();
  for (int64_t n = 0; n < g.N; ++n) {
    for (int64_t e = 0; e < E; ++e) out[size_t(n * E + e)] += bv[size_t(e)];
  }
  const Tensor in[3] = {x, kernel, bias};
  return emit({g.N, E}, std::move(out), std::span<const Tensor>(in, 3),
              [x, kernel, g, E](const Tensor& gr) -> std::vector<Tensor> {
                std::vector<double> patches;
                im2col(x.data(), g, patches);
                // dkernel [E,K] = gr^T [E,N] x patches [N,K]
                std::vector<double> gk(size_t(E * g.K));
                gemm(true, false, E, g.K, g.N, gr.data().data(), patches.data(), gk.data());
                // dpatches [N,K] = gr [N,E] x kernel [E,K]
                std::vector<double> gp(size_t(g.N * g.K));
                gemm(false, false, g.N, g.K, E, gr.data().data(), kernel.data().data(),
                     gp.data());
                std::vector<double> gx;
                col2im(gp, g, gx);
                std::vector<double> gb(size_t(E), 0.0);
                const auto& grv = gr.data();
                for (int64_t n = 0; n < g.N; ++n) {
                  for (int64_t e = 0; e < E; ++e) gb[size_t(e)] += grv[size_t(n * E + e)];
                }
                return {make_tensor(x.shape(), std::move(gx)),
                        make_tensor(kernel.shape(), std::move(gk)),
                        make_tensor({E}, std::move(gb))};
              });
}

// ---- extension point -------------------------------------------------------------

Tensor emit_custom(std::vector<int64_t> shape, std::vector<double> data,
                   std::span<const Tensor> inputs, BackwardFn backward) {
  return emit(std::move(shape), std::move(data), inputs, std::move(backward));
}

Tensor nrmse(const Tensor& pred, const Tensor& target, bool* zero_target) {
  require(pred.shape() == target.shape(), Err::ShapeMismatch, "nrmse shape mismatch");
  Tensor diff = sub(pred, target);
  Tensor num = pow_scalar(add_scalar(sum(mul(diff, diff)), 1e-30), 0.5);
  Tensor den = pow_scalar(add_scalar(sum(mul(target, target)), 1e-30), 0.5);
  const bool zero = den.scalar_value() < 1e-12;
  if (zero_target != nullptr) *zero_target = zero;
  if (zero) den = add_scalar(den, 1e-12);
  return div(num, den);
}

// ---- dispatcher --------------------------------------------------------------------

const char* op_name(Op op) {
  switch (op) {
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Div: return "div";
    case Op::Neg: return "neg";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::PowScalar: return "pow_scalar";
    case Op::MulScalar: return "mul_scalar";
    case Op::AddScalar: return "add_scalar";
    case Op::Relu: return "relu";
    case Op::Gelu: return "gelu";
    case Op::Sigmoid: return "sigmoid";
    case Op::Softplus: return "softplus";
    case Op::Erf: return "erf";
    case Op::Sum: return "sum";
    case Op::Mean: return "mean";
    case Op::CumsumLast: return "cumsum_last";
    case Op::MatMul: return "matmul";
    case Op::Bmm: return "bmm";
    case Op::AddBias: return "add_bias";
    case Op::Reshape: return "reshape";
    case Op::Transpose: return "transpose";
    case Op::Slice: return "slice";
    case Op::Concat: return "concat";
    case Op::GatherRows: return "gather_rows";
    case Op::RepeatLeading: return "repeat_leading";
    case Op::SoftmaxLast: return "softmax_last";
    case Op::LayerNorm: return "layer_norm";
    case Op::BilinearSample: return "bilinear_sample";
    case Op::TrilinearSample: return "trilinear_sample";
    case Op::LerpAxis0: return "lerp_axis0";
    case Op::PatchifyConv3d: return "patchify_conv3d";
  }
  return "?";
}

Tensor evaluate(Op op, std::span<const Tensor> in, const Attrs& attrs) {
  auto arity = [&](size_t n) {
    require(in.size() == n, Err::InvalidAttr,
            std::string(op_name(op)) + " expects " + std::to_string(n) + " inputs");
  };
  switch (op) {
    case Op::Add: arity(2); return add(in[0], in[1]);
    case Op::Sub: arity(2); return sub(in[0], in[1]);
    case Op::Mul: arity(2); return mul(in[0], in[1]);
    case Op::Div: arity(2); return div(in[0], in[1]);
    case Op::Neg: arity(1); return neg(in[0]);
    case Op::Exp: arity(1); return exp(in[0]);
    case Op::Log: arity(1); return log(in[0]);
    case Op::PowScalar: arity(1); return pow_scalar(in[0], attrs.real);
    case Op::MulScalar: arity(1); return mul_scalar(in[0], attrs.real);
    case Op::AddScalar: arity(1); return add_scalar(in[0], attrs.real);
    case Op::Relu: arity(1); return relu(in[0]);
    case Op::Gelu: arity(1); return gelu(in[0]);
    case Op::Sigmoid: arity(1); return sigmoid(in[0]);
    case Op::Softplus: arity(1); return softplus(in[0]);
    case Op::Erf: arity(1); return erf(in[0]);
    case Op::Sum:
      arity(1);
      return attrs.axes.empty() ? sum(in[0]) : sum(in[0], attrs.axes, attrs.flag);
    case Op::Mean:
      arity(1);
      return attrs.axes.empty() ? mean(in[0]) : mean(in[0], attrs.axes, attrs.flag);
    case Op::CumsumLast: arity(1); return cumsum_last(in[0], attrs.flag);
    case Op::MatMul: arity(2); return matmul(in[0], in[1]);
    case Op::Bmm: arity(2); return bmm(in[0], in[1]);
    case Op::AddBias: arity(2); return add_bias(in[0], in[1]);
    case Op::Reshape: arity(1); return reshape(in[0], attrs.axes);
    case Op::Transpose: arity(1); return transpose(in[0], attrs.axes);
    case Op::Slice:
      arity(1);
      require(attrs.ints.size() == 3, Err::InvalidAttr, "slice needs {axis,start,len}");
      return slice(in[0], int(attrs.ints[0]), attrs.ints[1], attrs.ints[2]);
    case Op::Concat:
      require(attrs.ints.size() == 1, Err::InvalidAttr, "concat needs {axis}");
      return concat(in, int(attrs.ints[0]));
    case Op::GatherRows: arity(1); return gather_rows(in[0], attrs.indices);
    case Op::RepeatLeading:
      arity(1);
      require(attrs.ints.size() == 1, Err::InvalidAttr, "repeat_leading needs {n}");
      return repeat_leading(in[0], attrs.ints[0]);
    case Op::SoftmaxLast: arity(1); return softmax_last(in[0]);
    case Op::LayerNorm:
      arity(3);
      return layer_norm(in[0], in[1], in[2], attrs.real > 0 ? attrs.real : 1e-5);
    case Op::BilinearSample: arity(2); return bilinear_sample(in[0], in[1]);
    case Op::TrilinearSample: arity(2); return trilinear_sample(in[0], in[1]);
    case Op::LerpAxis0: arity(1); return lerp_axis0(in[0], attrs.reals);
    case Op::PatchifyConv3d:
      arity(3);
      require(attrs.ints.size() == 3, Err::InvalidAttr, "patchify needs {pt,ph,pw}");
      return patchify_conv3d(in[0], in[1], in[2], attrs.ints[0], attrs.ints[1],
                             attrs.ints[2]);
  }
  raise(Err::InvalidAttr, "unknown op");
}

}  // namespace fluidfm::tensor
