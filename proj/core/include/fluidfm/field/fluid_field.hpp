#pragma once

#include <map>
#include <optional>

#include "fluidfm/field/hash_encoding.hpp"
#include "fluidfm/fm/forecaster.hpp"
#include "fluidfm/provenance.hpp"
#include "fluidfm/render/volume.hpp"

namespace fluidfm::field {

// coordinate axes of a space-time query
inline constexpr int kAxisX = 0, kAxisY = 1, kAxisZ = 2, kAxisT = 3;

struct FluidFieldConfig {
  HashEncodingConfig density_encoding;
  HashEncodingConfig velocity_encoding;
  int64_t mlp_hidden = 64;       // two hidden layers for both heads
  int64_t feature_dim_in = 96;   // forecaster embedding width
  int64_t aggregation_hidden = 64;
  double lambda_transport = 1e-3;
  double lambda_divergence = 1e-3;
  double w_aug = 0.5;

  std::string to_json() const;
  static FluidFieldConfig from_json(const std::string& text);
};

/// Hash-encoded density and velocity fields plus the feature-aggregation MLP.
/// sigma(x,t) = softplus(mlp(enc(x,t) + agg(feature))) >= 0 by construction;
/// u(x,t) is a linear head over its own encoding. Time is the fourth
/// interpolation axis, normalized over [0, t_max] frame units.
class FluidFieldState {
 public:
  FluidFieldConfig config;
  render::Box box;
  double t_max = 1.0;  // last trained frame index (>= 1)

  // parameter layout (checkpoint order): density tables, density MLP,
  // velocity tables, velocity MLP, aggregation MLP
  std::vector<tensor::Tensor> params;
  TrainingManifest manifest;
  int64_t trained_iterations = 0;

  static FluidFieldState init(const FluidFieldConfig& config, const render::Box& box,
                              double t_max, uint64_t seed);

  // index helpers into params
  int64_t density_tables_at() const { return 0; }
  int64_t density_mlp_at() const { return config.density_encoding.n_levels; }
  int64_t velocity_tables_at() const { return density_mlp_at() + 6; }
  int64_t velocity_mlp_at() const {
    return velocity_tables_at() + config.velocity_encoding.n_levels;
  }
  int64_t aggregation_at() const { return velocity_mlp_at() + 6; }
  int64_t param_count() const;

  std::span<const tensor::Tensor> density_tables() const;
  std::span<const tensor::Tensor> velocity_tables() const;

  /// True per-parameter learning-rate grouping: hash tables train faster
  /// than MLPs.
  bool is_table_param(size_t index) const;

  /// World (x,y,z, frame t) -> normalized [0,1]^4 tensor [N,4].
  tensor::Tensor normalize_points(const tensor::Tensor& world_points) const;

  void save(const std::string& path) const;
  static FluidFieldState load(const std::string& path);
};

/// A field query result: value plus requested first derivatives, all in
/// world units (d/dx per box unit, d/dt per frame).
struct FieldSample {
  tensor::Tensor value;                    // [N] sigma, [N,3] velocity
  std::map<int, tensor::Tensor> dcoord;    // axis -> same shape as value
};

/// Density query. points are [N,4] world coordinates; point_features, when
/// given, is [N, feature_dim_in] (one shared row per ray, repeated per
/// sample). axes lists the coordinate derivatives to build alongside the
/// value; all outputs stay on the active tape.
FieldSample query_density(const FluidFieldState& state, const tensor::Tensor& points,
                          const std::optional<tensor::Tensor>& point_features,
                          std::span<const int> axes);

FieldSample query_velocity(const FluidFieldState& state, const tensor::Tensor& points,
                           std::span<const int> axes);

/// Per-ray feature vector: project a ray point to image coordinates, map to
/// the token grid affinely, and bilinearly blend the four neighbors. Shared
/// by every sample along the ray.
struct RayFeature {
  tensor::Tensor vector;  // [feature_dim_in]
  int camera_id = 0;
  double t = 0.0;
};

RayFeature aggregate_features(const render::Camera& camera, const render::Ray& ray,
                              const tensor::Tensor& feature_grid,
                              const fm::ForecasterConfig& fm_config);

/// Batched variant: rays -> [R, embed] against one feature grid.
tensor::Tensor aggregate_features_batch(const render::Camera& camera,
                                        std::span<const render::Ray> rays,
                                        const tensor::Tensor& feature_grid,
                                        const fm::ForecasterConfig& fm_config);

/// Anything that can answer sigma / velocity queries with derivatives; the
/// physics losses are written against this so analytic test fields run
/// through the same loss code as the neural field.
struct FieldEvaluator {
  virtual ~FieldEvaluator() = default;
  virtual FieldSample sigma(const tensor::Tensor& points, std::span<const int> axes) const = 0;
  virtual FieldSample velocity(const tensor::Tensor& points,
                               std::span<const int> axes) const = 0;
};

struct NeuralFieldEvaluator final : FieldEvaluator {
  const FluidFieldState* state;
  explicit NeuralFieldEvaluator(const FluidFieldState& s) : state(&s) {}
  FieldSample sigma(const tensor::Tensor& points, std::span<const int> axes) const override;
  FieldSample velocity(const tensor::Tensor& points,
                       std::span<const int> axes) const override;
};

struct PhysicsLosses {
  tensor::Tensor transport;   // mean (d sigma/dt + u . grad sigma)^2
  tensor::Tensor divergence;  // mean (div u)^2
};

/// points: [N,4] world coordinates inside the domain.
PhysicsLosses physics_losses(const FieldEvaluator& field, const tensor::Tensor& points);

}  // namespace fluidfm::field
