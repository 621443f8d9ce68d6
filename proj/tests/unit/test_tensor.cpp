#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fluidfm/tensor/grad_check.hpp"
#include "fluidfm/tensor/ops.hpp"
#include "fluidfm/tensor/optim.hpp"
#include "fluidfm/tensor/tape.hpp"
#include "fluidfm/util/errors.hpp"

using namespace fluidfm;
using namespace fluidfm::tensor;

namespace {

Tensor rand_tensor(std::vector<int64_t> shape, uint64_t seed, double sigma = 1.0) {
  Rng rng(seed);
  return Tensor::randn(std::move(shape), rng, sigma);
}

}  // namespace

TEST_CASE("elementwise add matches the definition") {
  Tensor a = Tensor::from_data({2}, {1, 2});
  Tensor b = Tensor::from_data({2}, {3, 4});
  Tensor c = add(a, b);
  CHECK(c.at(0) == doctest::Approx(4));
  CHECK(c.at(1) == doctest::Approx(6));
}

TEST_CASE("matmul with identity returns the operand") {
  ScalarModeScope mode(Scalar::F64);
  Tensor eye = Tensor::from_data({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor a = rand_tensor({3, 3}, 7);
  Tensor out = matmul(eye, a);
  for (int64_t i = 0; i < 9; ++i) CHECK(out.at(i) == doctest::Approx(a.at(i)));
}

TEST_CASE("softmax of a constant row is uniform") {
  Tensor x = Tensor::from_data({3}, {0, 0, 0});
  Tensor y = softmax_last(x);
  for (int64_t i = 0; i < 3; ++i) CHECK(y.at(i) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("backward of sum(x*x) is 2x") {
  ScalarModeScope mode(Scalar::F64);
  Tensor x = Tensor::from_data({3}, {1, 2, 3}).with_grad();
  TapeScope scope;
  Tensor loss = sum(mul(x, x));
  GradMap grads = scope.tape().backward(loss);
  Tensor gx = grads.grad(x);
  CHECK(gx.at(0) == doctest::Approx(2));
  CHECK(gx.at(1) == doctest::Approx(4));
  CHECK(gx.at(2) == doctest::Approx(6));
}

TEST_CASE("backward of sum(exp(x)) at zero is one") {
  ScalarModeScope mode(Scalar::F64);
  Tensor x = Tensor::from_data({1}, {0}).with_grad();
  TapeScope scope;
  GradMap grads = scope.tape().backward(sum(exp(x)));
  CHECK(grads.grad(x).at(0) == doctest::Approx(1.0));
}

TEST_CASE("backward demands a scalar loss on the active tape") {
  ScalarModeScope mode(Scalar::F64);
  Tensor x = Tensor::from_data({2}, {1, 2}).with_grad();
  TapeScope scope;
  Tensor y = mul(x, x);
  CHECK_THROWS_AS(scope.tape().backward(y), FluidError);
  Tensor detached = Tensor::from_data({}, {3.0});
  CHECK_THROWS_AS(scope.tape().backward(detached), FluidError);
}

TEST_CASE("nrmse examples") {
  Tensor t = Tensor::from_data({2}, {0, 2});
  SUBCASE("identity gives zero") {
    CHECK(nrmse(t, t).scalar_value() == doctest::Approx(0.0).epsilon(1e-6));
  }
  SUBCASE("zero prediction gives one") {
    Tensor z = Tensor::zeros({2});
    CHECK(nrmse(z, t).scalar_value() == doctest::Approx(1.0));
  }
  SUBCASE("hand-computed ratio") {
    Tensor p = Tensor::from_data({2}, {1, 2});
    CHECK(nrmse(p, t).scalar_value() == doctest::Approx(0.5));
  }
  SUBCASE("zero target is flagged") {
    bool zero = false;
    Tensor z = Tensor::zeros({2});
    nrmse(t, z, &zero);
    CHECK(zero);
  }
}

TEST_CASE("nrmse gradient matches finite differences") {
  ScalarModeScope mode(Scalar::F64);
  Tensor pred = rand_tensor({4, 4}, 11);
  Tensor target = rand_tensor({4, 4}, 12);
  const double err = grad_check_fn(
      [&](std::span<const Tensor> in) { return nrmse(in[0], in[1]); }, {pred, target},
      1e-4);
  CHECK(err < 1e-4);
}

TEST_CASE("grad_check covers every primitive") {
  ScalarModeScope mode(Scalar::F64);
  struct Case {
    Op op;
    std::vector<Tensor> inputs;
    Attrs attrs;
    std::vector<int> skip;
  };
  // inputs chosen away from kinks (relu) and singularities (log/div)
  auto positive = [](std::vector<int64_t> shape, uint64_t seed) {
    Rng rng(seed);
    std::vector<double> v(size_t(shape_size(shape)));
    for (auto& x : v) x = 0.5 + rng.uniform();
    return Tensor::from_data(shape, std::move(v));
  };
  auto away_from_zero = [](std::vector<int64_t> shape, uint64_t seed) {
    Rng rng(seed);
    std::vector<double> v(size_t(shape_size(shape)));
    for (auto& x : v) {
      const double u = rng.normal();
      x = (u >= 0 ? 0.2 : -0.2) + u;
    }
    return Tensor::from_data(shape, std::move(v));
  };

  for (uint64_t seed = 1; seed <= 20; ++seed) {
    std::vector<Case> cases;
    cases.push_back({Op::Add, {rand_tensor({3, 3}, seed), rand_tensor({3, 3}, seed + 100)}, {}, {}});
    cases.push_back({Op::Sub, {rand_tensor({3, 3}, seed), rand_tensor({3, 3}, seed + 101)}, {}, {}});
    cases.push_back({Op::Mul, {rand_tensor({3, 3}, seed), rand_tensor({3, 3}, seed + 102)}, {}, {}});
    cases.push_back({Op::Div, {rand_tensor({3, 3}, seed), positive({3, 3}, seed + 103)}, {}, {}});
    cases.push_back({Op::Mul, {rand_tensor({3, 3}, seed), Tensor::scalar(0.7)}, {}, {}});
    cases.push_back({Op::Neg, {rand_tensor({5}, seed)}, {}, {}});
    cases.push_back({Op::Exp, {rand_tensor({5}, seed)}, {}, {}});
    cases.push_back({Op::Log, {positive({5}, seed)}, {}, {}});
    {
      Attrs a; a.real = 1.7;
      cases.push_back({Op::PowScalar, {positive({5}, seed)}, a, {}});
    }
    {
      Attrs a; a.real = -2.5;
      cases.push_back({Op::MulScalar, {rand_tensor({5}, seed)}, a, {}});
      cases.push_back({Op::AddScalar, {rand_tensor({5}, seed)}, a, {}});
    }
    cases.push_back({Op::Relu, {away_from_zero({6}, seed)}, {}, {}});
    cases.push_back({Op::Gelu, {rand_tensor({6}, seed)}, {}, {}});
    cases.push_back({Op::Sigmoid, {rand_tensor({6}, seed)}, {}, {}});
    cases.push_back({Op::Softplus, {rand_tensor({6}, seed)}, {}, {}});
    cases.push_back({Op::Erf, {rand_tensor({6}, seed)}, {}, {}});
    cases.push_back({Op::Sum, {rand_tensor({2, 3, 2}, seed)}, {}, {}});
    {
      Attrs a; a.axes = {1};
      cases.push_back({Op::Sum, {rand_tensor({2, 3, 2}, seed)}, a, {}});
      cases.push_back({Op::Mean, {rand_tensor({2, 3, 2}, seed)}, a, {}});
    }
    cases.push_back({Op::CumsumLast, {rand_tensor({2, 4}, seed)}, {}, {}});
    {
      Attrs a; a.flag = true;
      cases.push_back({Op::CumsumLast, {rand_tensor({2, 4}, seed)}, a, {}});
    }
    cases.push_back({Op::MatMul, {rand_tensor({3, 4}, seed), rand_tensor({4, 2}, seed + 104)}, {}, {}});
    cases.push_back({Op::Bmm, {rand_tensor({2, 3, 4}, seed), rand_tensor({2, 4, 2}, seed + 105)}, {}, {}});
    cases.push_back({Op::AddBias, {rand_tensor({3, 4}, seed), rand_tensor({4}, seed + 106)}, {}, {}});
    {
      Attrs a; a.axes = {6, 2};
      cases.push_back({Op::Reshape, {rand_tensor({3, 4}, seed)}, a, {}});
    }
    {
      Attrs a; a.axes = {2, 0, 1};
      cases.push_back({Op::Transpose, {rand_tensor({2, 3, 4}, seed)}, a, {}});
    }
    {
      Attrs a; a.ints = {1, 1, 2};
      cases.push_back({Op::Slice, {rand_tensor({3, 4}, seed)}, a, {}});
    }
    {
      Attrs a; a.ints = {0};
      cases.push_back({Op::Concat, {rand_tensor({2, 3}, seed), rand_tensor({1, 3}, seed + 107)}, a, {}});
    }
    {
      Attrs a; a.indices = {2, 0, 2};
      cases.push_back({Op::GatherRows, {rand_tensor({3, 2}, seed)}, a, {}});
    }
    {
      Attrs a; a.ints = {3};
      cases.push_back({Op::RepeatLeading, {rand_tensor({2, 2}, seed)}, a, {}});
    }
    cases.push_back({Op::SoftmaxLast, {rand_tensor({3, 5}, seed)}, {}, {}});
    cases.push_back({Op::LayerNorm,
                     {rand_tensor({3, 6}, seed), positive({6}, seed + 108), rand_tensor({6}, seed + 109)},
                     {}, {}});
    {
      Attrs a;
      Rng rng(seed + 110);
      std::vector<double> pts = {0.7 + 4 * rng.uniform(), 0.7 + 4 * rng.uniform(),
                                 1.3 + 3 * rng.uniform(), 2.1 + 2 * rng.uniform()};
      cases.push_back({Op::BilinearSample,
                       {rand_tensor({8, 8, 2}, seed), Tensor::from_data({2, 2}, pts)}, a, {1}});
    }
    {
      Attrs a;
      Rng rng(seed + 111);
      std::vector<double> pts = {0.5 + 2 * rng.uniform(), 0.5 + 2 * rng.uniform(),
                                 0.5 + 2 * rng.uniform()};
      cases.push_back({Op::TrilinearSample,
                       {rand_tensor({4, 4, 4, 2}, seed), Tensor::from_data({1, 3}, pts)}, a, {1}});
    }
    {
      Attrs a; a.reals = {0.0, 1.4, 2.6, 3.0};
      cases.push_back({Op::LerpAxis0, {rand_tensor({4, 3}, seed)}, a, {}});
    }
    {
      Attrs a; a.ints = {2, 2, 2};
      cases.push_back({Op::PatchifyConv3d,
                       {rand_tensor({4, 2, 4, 4}, seed), rand_tensor({3, 16}, seed + 112),
                        rand_tensor({3}, seed + 113)},
                       a, {}});
    }

    for (const auto& c : cases) {
      const double err = grad_check(c.op, c.inputs, c.attrs, 1e-4, seed, c.skip);
      INFO("op = ", op_name(c.op), " seed = ", seed);
      CHECK(err < 1e-4);
    }
  }
}

TEST_CASE("grad_check exercises composite attention") {
  ScalarModeScope mode(Scalar::F64);
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    Tensor q = rand_tensor({2, 4, 3}, seed, 0.5);
    Tensor k = rand_tensor({2, 4, 3}, seed + 50, 0.5);
    Tensor v = rand_tensor({2, 4, 3}, seed + 90, 0.5);
    const double err = grad_check_fn(
        [](std::span<const Tensor> in) {
          return attention(in[0], in[1], in[2], 1.0 / std::sqrt(3.0));
        },
        {q, k, v}, 1e-4, seed);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("evaluate is deterministic and tape replay repeats gradients bitwise") {
  ScalarModeScope mode(Scalar::F64);
  Tensor a = rand_tensor({16, 16}, 3);
  Tensor b = rand_tensor({16, 16}, 4);
  Tensor first = matmul(a, b);
  Tensor second = matmul(a, b);
  CHECK(first.data() == second.data());

  auto run = [&]() {
    Tensor w = a.with_grad();
    TapeScope scope;
    Tensor loss = sum(mul(matmul(w, b), matmul(w, b)));
    return scope.tape().backward(loss).grad(w).data();
  };
  CHECK(run() == run());
}

TEST_CASE("f32 mode rounds storage to single precision") {
  ScalarModeScope mode(Scalar::F32);
  Tensor x = Tensor::from_data({1}, {0.1});
  CHECK(x.at(0) == doctest::Approx(double(float(0.1))).epsilon(1e-12));
  CHECK(x.at(0) != 0.1);
}

TEST_CASE("shape mismatch raises") {
  Tensor a = Tensor::zeros({2, 2});
  Tensor b = Tensor::zeros({3});
  CHECK_THROWS_AS(add(a, b), FluidError);
  CHECK_THROWS_AS(matmul(a, Tensor::zeros({3, 2})), FluidError);
}

TEST_CASE("sgd and adam take finite steps") {
  ScalarModeScope mode(Scalar::F64);
  std::vector<Tensor> params = {Tensor::from_data({2}, {1.0, -2.0}).with_grad()};
  std::vector<Tensor> grads = {Tensor::from_data({2}, {0.5, -0.5})};
  Sgd sgd;
  sgd.step(params, grads, 0.1);
  CHECK(params[0].at(0) == doctest::Approx(0.95));
  CHECK(params[0].at(1) == doctest::Approx(-1.95));

  Adam adam;
  adam.step(params, grads, {0.1});
  CHECK(params[0].all_finite());
  CHECK(cosine_lr(1.0, 0, 100) == doctest::Approx(1.0));
  CHECK(cosine_lr(1.0, 99, 100) == doctest::Approx(0.0).epsilon(1e-9));
}
