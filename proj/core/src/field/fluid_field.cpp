#include "fluidfm/field/fluid_field.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "fluidfm/util/binio.hpp"
#include "fluidfm/util/errors.hpp"

namespace fluidfm::field {

using namespace fluidfm::tensor;
using nlohmann::json;
using render::operator+;
using render::operator*;

std::string FluidFieldConfig::to_json() const {
  json j;
  j["density_encoding"] = json::parse(density_encoding.to_json());
  j["velocity_encoding"] = json::parse(velocity_encoding.to_json());
  j["mlp_hidden"] = mlp_hidden;
  j["feature_dim_in"] = feature_dim_in;
  j["aggregation_hidden"] = aggregation_hidden;
  j["lambda_transport"] = lambda_transport;
  j["lambda_divergence"] = lambda_divergence;
  j["w_aug"] = w_aug;
  return j.dump();
}

FluidFieldConfig FluidFieldConfig::from_json(const std::string& text) {
  const json j = json::parse(text);
  FluidFieldConfig c;
  c.density_encoding = HashEncodingConfig::from_json(j.at("density_encoding").dump());
  c.velocity_encoding = HashEncodingConfig::from_json(j.at("velocity_encoding").dump());
  c.mlp_hidden = j.at("mlp_hidden").get<int64_t>();
  c.feature_dim_in = j.at("feature_dim_in").get<int64_t>();
  c.aggregation_hidden = j.at("aggregation_hidden").get<int64_t>();
  c.lambda_transport = j.at("lambda_transport").get<double>();
  c.lambda_divergence = j.at("lambda_divergence").get<double>();
  c.w_aug = j.at("w_aug").get<double>();
  return c;
}

namespace {

void push_mlp(std::vector<Tensor>& params, Rng& rng, std::string_view name, int64_t in,
              int64_t hidden, int64_t out, bool zero_last) {
  auto weight = [&](std::vector<int64_t> shape, std::string_view suffix, double scale) {
    Rng stream = rng.split(std::string(name) + "/" + std::string(suffix));
    params.push_back(Tensor::randn(std::move(shape), stream, scale).with_grad());
  };
  auto zeros = [&](std::vector<int64_t> shape) {
    params.push_back(Tensor::zeros(std::move(shape)).with_grad());
  };
  weight({in, hidden}, "w1", std::sqrt(2.0 / double(in)));
  zeros({hidden});
  weight({hidden, hidden}, "w2", std::sqrt(2.0 / double(hidden)));
  zeros({hidden});
  if (zero_last) {
    zeros({hidden, out});
  } else {
    weight({hidden, out}, "w3", std::sqrt(2.0 / double(hidden)));
  }
  zeros({out});
}

}  // namespace

FluidFieldState FluidFieldState::init(const FluidFieldConfig& config, const render::Box& box,
                                      double t_max, uint64_t seed) {
  require(t_max >= 1.0, Err::InvalidAttr, "time range needs at least two frames");
  FluidFieldState s;
  s.config = config;
  s.box = box;
  s.t_max = t_max;
  Rng rng(seed);
  Rng rd = rng.split("density_tables");
  auto dt = init_hash_tables(config.density_encoding, rd);
  s.params.insert(s.params.end(), dt.begin(), dt.end());
  push_mlp(s.params, rng, "density_mlp", config.density_encoding.feature_dim(),
           config.mlp_hidden, 1, false);
  Rng rv = rng.split("velocity_tables");
  auto vt = init_hash_tables(config.velocity_encoding, rv);
  s.params.insert(s.params.end(), vt.begin(), vt.end());
  push_mlp(s.params, rng, "velocity_mlp", config.velocity_encoding.feature_dim(),
           config.mlp_hidden, 3, false);
  // aggregation head: two layers (ReLU), final layer zero-initialized so
  // enabling features starts as an exact no-op
  {
    Rng stream = rng.split("aggregation_mlp/w1");
    s.params.push_back(Tensor::randn({config.feature_dim_in, config.aggregation_hidden},
                                     stream,
                                     std::sqrt(2.0 / double(config.feature_dim_in)))
                           .with_grad());
    s.params.push_back(Tensor::zeros({config.aggregation_hidden}).with_grad());
    s.params.push_back(
        Tensor::zeros({config.aggregation_hidden, config.density_encoding.feature_dim()})
            .with_grad());
    s.params.push_back(
        Tensor::zeros({config.density_encoding.feature_dim()}).with_grad());
  }
  return s;
}

int64_t FluidFieldState::param_count() const {
  int64_t n = 0;
  for (const Tensor& p : params) n += p.size();
  return n;
}

std::span<const Tensor> FluidFieldState::density_tables() const {
  return {params.data() + density_tables_at(),
          static_cast<size_t>(config.density_encoding.n_levels)};
}

std::span<const Tensor> FluidFieldState::velocity_tables() const {
  return {params.data() + velocity_tables_at(),
          static_cast<size_t>(config.velocity_encoding.n_levels)};
}

bool FluidFieldState::is_table_param(size_t index) const {
  const int64_t i = int64_t(index);
  return (i >= density_tables_at() && i < density_mlp_at()) ||
         (i >= velocity_tables_at() && i < velocity_mlp_at());
}

Tensor FluidFieldState::normalize_points(const Tensor& world_points) const {
  require(world_points.rank() == 2 && world_points.dim(1) == 4, Err::ShapeMismatch,
          "points must be [N,4]");
  const int64_t n = world_points.dim(0);
  const auto& pv = world_points.data();
  std::vector<double> out(static_cast<size_t>(n * 4));
  for (int64_t i = 0; i < n; ++i) {
    for (int a = 0; a < 3; ++a) {
      const double lo = box.lo[static_cast<size_t>(a)], hi = box.hi[static_cast<size_t>(a)];
      out[static_cast<size_t>(4 * i + a)] = (pv[static_cast<size_t>(4 * i + a)] - lo) / (hi - lo);
    }
    out[static_cast<size_t>(4 * i + 3)] = pv[static_cast<size_t>(4 * i + 3)] / t_max;
  }
  return Tensor::from_data({n, 4}, std::move(out));
}

namespace {

/// gelu'(x) built from on-tape primitives so the training loss can
/// differentiate derivative channels w.r.t. parameters.
Tensor gelu_prime(const Tensor& x) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  Tensor cdf = mul_scalar(add_scalar(erf(mul_scalar(x, kInvSqrt2)), 1.0), 0.5);
  Tensor pdf = mul_scalar(exp(mul_scalar(mul(x, x), -0.5)), kInvSqrt2Pi);
  return add(cdf, mul(x, pdf));
}

struct MlpParams {
  Tensor w1, b1, w2, b2, w3, b3;
};

MlpParams mlp_at(const FluidFieldState& s, int64_t base) {
  return {s.params[static_cast<size_t>(base)],     s.params[static_cast<size_t>(base + 1)],
          s.params[static_cast<size_t>(base + 2)], s.params[static_cast<size_t>(base + 3)],
          s.params[static_cast<size_t>(base + 4)], s.params[static_cast<size_t>(base + 5)]};
}

/// Value and (optionally) coordinate-tangent channels through a 2-hidden
/// GELU MLP. Tangents follow the chain rule with on-tape activation
/// derivatives, so everything remains differentiable w.r.t. parameters.
void mlp_forward(const MlpParams& mlp, const Tensor& input,
                 const std::map<int, Tensor>& input_tangents, Tensor& out,
                 std::map<int, Tensor>& out_tangents) {
  Tensor h1 = add_bias(matmul(input, mlp.w1), mlp.b1);
  Tensor a1 = gelu(h1);
  Tensor h2 = add_bias(matmul(a1, mlp.w2), mlp.b2);
  Tensor a2 = gelu(h2);
  out = add_bias(matmul(a2, mlp.w3), mlp.b3);
  if (input_tangents.empty()) return;
  Tensor g1 = gelu_prime(h1);
  Tensor g2 = gelu_prime(h2);
  for (const auto& [axis, din] : input_tangents) {
    Tensor d1 = mul(g1, matmul(din, mlp.w1));
    Tensor d2 = mul(g2, matmul(d1, mlp.w2));
    out_tangents[axis] = matmul(d2, mlp.w3);
  }
}

}  // namespace

FieldSample query_density(const FluidFieldState& state, const Tensor& points,
                          const std::optional<Tensor>& point_features,
                          std::span<const int> axes) {
  const Tensor pn = state.normalize_points(points);
  Tensor enc = hash_encode(state.config.density_encoding, state.density_tables(), pn);
  std::map<int, Tensor> enc_tangents;
  for (int axis : axes) {
    Tensor d = hash_encode_dcoord(state.config.density_encoding, state.density_tables(),
                                  pn, axis);
    // normalized -> world units
    const double scale =
        axis == kAxisT
            ? 1.0 / state.t_max
            : 1.0 / (state.box.hi[static_cast<size_t>(axis)] - state.box.lo[static_cast<size_t>(axis)]);
    enc_tangents[axis] = mul_scalar(d, scale);
  }

  Tensor mlp_in = enc;
  if (point_features.has_value()) {
    require(point_features->rank() == 2 &&
                point_features->dim(0) == points.dim(0) &&
                point_features->dim(1) == state.config.feature_dim_in,
            Err::ShapeMismatch, "point features must be [N, embed]");
    const int64_t base = state.aggregation_at();
    Tensor a = relu(add_bias(matmul(*point_features, state.params[static_cast<size_t>(base)]),
                             state.params[static_cast<size_t>(base + 1)]));
    Tensor mapped =
        add_bias(matmul(a, state.params[static_cast<size_t>(base + 2)]), state.params[static_cast<size_t>(base + 3)]);
    mlp_in = add(enc, mapped);
  }

  Tensor value;
  std::map<int, Tensor> tangents;
  mlp_forward(mlp_at(state, state.density_mlp_at()), mlp_in, enc_tangents, value, tangents);
  FieldSample sample;
  sample.value = reshape(softplus(value), {points.dim(0)});
  for (const auto& [axis, dz] : tangents) {
    sample.dcoord[axis] = reshape(mul(sigmoid(value), dz), {points.dim(0)});
  }
  return sample;
}

FieldSample query_velocity(const FluidFieldState& state, const Tensor& points,
                           std::span<const int> axes) {
  const Tensor pn = state.normalize_points(points);
  Tensor enc = hash_encode(state.config.velocity_encoding, state.velocity_tables(), pn);
  std::map<int, Tensor> enc_tangents;
  for (int axis : axes) {
    Tensor d = hash_encode_dcoord(state.config.velocity_encoding, state.velocity_tables(),
                                  pn, axis);
    const double scale =
        axis == kAxisT
            ? 1.0 / state.t_max
            : 1.0 / (state.box.hi[static_cast<size_t>(axis)] - state.box.lo[static_cast<size_t>(axis)]);
    enc_tangents[axis] = mul_scalar(d, scale);
  }
  Tensor value;
  std::map<int, Tensor> tangents;
  mlp_forward(mlp_at(state, state.velocity_mlp_at()), enc, enc_tangents, value, tangents);
  FieldSample sample;
  sample.value = value;  // [N,3]
  for (auto& [axis, d] : tangents) sample.dcoord[axis] = d;
  return sample;
}

RayFeature aggregate_features(const render::Camera& camera, const render::Ray& ray,
                              const Tensor& feature_grid,
                              const fm::ForecasterConfig& fm_config) {
  Tensor batch = aggregate_features_batch(camera, std::span<const render::Ray>(&ray, 1),
                                          feature_grid, fm_config);
  RayFeature rf;
  rf.vector = reshape(batch, {feature_grid.dim(2)});
  rf.camera_id = ray.camera_id;
  rf.t = ray.t;
  return rf;
}

Tensor aggregate_features_batch(const render::Camera& camera,
                                std::span<const render::Ray> rays,
                                const Tensor& feature_grid,
                                const fm::ForecasterConfig& fm_config) {
  require(feature_grid.rank() == 3, Err::ShapeMismatch, "feature grid must be [H,W,E]");
  std::vector<double> pts(rays.size() * 2);
  for (size_t i = 0; i < rays.size(); ++i) {
    // any point on the ray projects to its pixel; one unit along the ray is
    // safely in front of the rig
    const render::Vec3 p = rays[i].origin + 1.0 * rays[i].direction;
    auto [row, col] = render::project_ray(camera, p);
    // affine image -> token grid mapping; outside-the-grid projections clamp
    // inside bilinear_sample
    pts[2 * i] = fm_config.feature_grid_row(row);
    pts[2 * i + 1] = fm_config.feature_grid_col(col);
  }
  return bilinear_sample(feature_grid,
                         Tensor::from_data({int64_t(rays.size()), 2}, std::move(pts)));
}

FieldSample NeuralFieldEvaluator::sigma(const Tensor& points,
                                        std::span<const int> axes) const {
  return query_density(*state, points, std::nullopt, axes);
}

FieldSample NeuralFieldEvaluator::velocity(const Tensor& points,
                                           std::span<const int> axes) const {
  return query_velocity(*state, points, axes);
}

PhysicsLosses physics_losses(const FieldEvaluator& field, const Tensor& points) {
  const int sigma_axes[4] = {kAxisT, kAxisX, kAxisY, kAxisZ};
  const int vel_axes[3] = {kAxisX, kAxisY, kAxisZ};
  FieldSample s = field.sigma(points, sigma_axes);
  FieldSample u = field.velocity(points, vel_axes);
  const int64_t n = points.dim(0);

  auto component = [&](const Tensor& v3, int64_t c) {
    return reshape(slice(v3, 1, c, 1), {n});
  };
  Tensor transport = s.dcoord.at(kAxisT);
  transport = add(transport, mul(component(u.value, 0), s.dcoord.at(kAxisX)));
  transport = add(transport, mul(component(u.value, 1), s.dcoord.at(kAxisY)));
  transport = add(transport, mul(component(u.value, 2), s.dcoord.at(kAxisZ)));

  Tensor div = component(u.dcoord.at(kAxisX), 0);
  div = add(div, component(u.dcoord.at(kAxisY), 1));
  div = add(div, component(u.dcoord.at(kAxisZ), 2));

  PhysicsLosses out;
  out.transport = mean(mul(transport, transport));
  out.divergence = mean(mul(div, div));
  return out;
}

void FluidFieldState::save(const std::string& path) const {
  json meta;
  meta["config"] = json::parse(config.to_json());
  meta["box_lo"] = box.lo;
  meta["box_hi"] = box.hi;
  meta["t_max"] = t_max;
  meta["trained_iterations"] = trained_iterations;
  meta["manifest"] = json::parse(manifest.to_json());
  auto os = open_out(path);
  write_magic(os, "NFLD");
  write_u32(os, 1);
  write_string(os, meta.dump());
  std::vector<float> flat;
  flat.reserve(static_cast<size_t>(param_count()));
  for (const Tensor& p : params) {
    for (double v : p.data()) flat.push_back(float(v));
  }
  write_u64(os, flat.size());
  write_f32_array(os, flat);
  require(bool(os), Err::IoError, "short write: " + path);
}

FluidFieldState FluidFieldState::load(const std::string& path) {
  auto is = open_in(path);
  expect_magic(is, "NFLD", path);
  require(read_u32(is) == 1, Err::IoError, "unsupported field checkpoint version");
  const json meta = json::parse(read_string(is));
  render::Box box;
  box.lo = meta.at("box_lo").get<render::Vec3>();
  box.hi = meta.at("box_hi").get<render::Vec3>();
  FluidFieldState s = init(FluidFieldConfig::from_json(meta.at("config").dump()), box,
                           meta.at("t_max").get<double>(), 0);
  s.trained_iterations = meta.at("trained_iterations").get<int64_t>();
  s.manifest = TrainingManifest::from_json(meta.at("manifest").dump());
  const uint64_t n = read_u64(is);
  require(n == uint64_t(s.param_count()), Err::IoError, "field parameter count mismatch");
  const std::vector<float> flat = read_f32_array(is, n);
  size_t offset = 0;
  for (Tensor& p : s.params) {
    std::vector<double> data(static_cast<size_t>(p.size()));
    for (size_t i = 0; i < data.size(); ++i) data[i] = double(flat[offset + i]);
    offset += data.size();
    p = make_tensor(p.shape(), std::move(data), true);
  }
  return s;
}

}  // namespace fluidfm::field
