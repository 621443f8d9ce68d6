#pragma once

#include "fluidfm/field/advect.hpp"
#include "fluidfm/field/fluid_field.hpp"
#include "fluidfm/fm/train.hpp"
#include "fluidfm/render/video.hpp"
#include "fluidfm/views.hpp"

namespace fluidfm::field {

struct FieldSchedule {
  int64_t iterations = 1500;
  int64_t rays_per_batch = 1024;
  int64_t samples_per_ray = 32;
  int64_t physics_points = 256;
  double lr_tables = 1e-2;
  double lr_mlp = 1e-3;
  double beta1 = 0.9, beta2 = 0.99;
  uint64_t seed = 0;
  int64_t log_every = 100;
};

struct FieldTrainLog {
  std::vector<int64_t> iteration;
  std::vector<double> photometric, transport, divergence;
};

/// Photometric + physics training over rays sampled from the real training
/// frames and any augmented views (augmented frames enter the ray draw with
/// weight w_aug). When a forecaster is supplied, per-ray features from its
/// token grid are summed into the density encoding; feature grids come from
/// the training/augmented frames themselves (pad_to_input below T_in).
FieldTrainLog train_field(FluidFieldState& state, const render::VideoSet& videos,
                          int64_t nf, const std::vector<AugmentedView>& augmented,
                          const fm::ForecasterWeights* forecaster,
                          const FieldSchedule& schedule);

enum class RenderMode { Direct, Advected };

/// Test-time feature source: the field renders its own history and feeds it
/// to the forecaster (pad_to_input when fewer than T_in frames exist).
class FeatureBootstrap {
 public:
  FeatureBootstrap(const FluidFieldState& state, const fm::ForecasterWeights& forecaster,
                   const render::Camera& camera, int n_samples);
  /// Feature grid for frame t, rendering prior frames on demand.
  const tensor::Tensor& grid_for(int64_t t);

 private:
  const FluidFieldState* state_;
  const fm::ForecasterWeights* fm_;
  render::Camera camera_;
  int n_samples_;
  std::vector<render::Frame> rendered_;  // field-rendered history, no features
  std::map<int64_t, tensor::Tensor> grids_;
};

/// Renders one frame from the field. Direct mode queries the field (with
/// bootstrapped features when given); Advected renders a supplied density
/// grid through the non-differentiable grid path.
render::Frame render_test_frame(const FluidFieldState& state, const render::Camera& camera,
                                double t, RenderMode mode,
                                const std::vector<float>* advected_grid = nullptr,
                                int64_t grid_d = 0, int64_t grid_h = 0, int64_t grid_w = 0,
                                FeatureBootstrap* features = nullptr, int n_samples = 64);

}  // namespace fluidfm::field
