#pragma once

#include <functional>
#include <optional>

#include "fluidfm/render/camera.hpp"
#include "fluidfm/tensor/ops.hpp"

namespace fluidfm::render {

struct Box {
  Vec3 lo{0.0, 0.0, 0.0};
  Vec3 hi{1.0, 1.0, 1.0};
};

/// Ray/box intersection interval; hit == false when the ray misses.
struct RaySpan {
  double near = 0.0;
  double far = 0.0;
  bool hit = false;
};
RaySpan intersect_box(const Ray& ray, const Box& box);

/// Scalar density query at a world point (sigma must be >= 0).
using DensitySampler = std::function<double(const Vec3& point, double t)>;

/// Emission-absorption compositing with white emission along [near, far].
/// midpoint == true uses deterministic midpoint samples (ground truth and
/// evaluation); otherwise samples are stratified with the given jitters in
/// [0,1) (one per sample). Raises NegativeDensity if the sampler breaks its
/// contract and InvalidInterval for a bad [near, far].
double render_ray(const DensitySampler& sampler, const Ray& ray, double near, double far,
                  int n_samples, bool midpoint = true,
                  const std::vector<double>* jitters = nullptr);

/// Trilinear sampler over a [D,H,W] grid mapped onto box (z up == D axis);
/// zero outside. extinction scales the stored density.
DensitySampler grid_sampler(const std::vector<float>& grid, int64_t d, int64_t h, int64_t w,
                            const Box& box, double extinction);

/// Differentiable compositing: sigmas [n_rays, n_samples] (>= 0, on tape) and
/// deltas [n_rays, n_samples] of segment lengths produce intensities
/// [n_rays]. The result is in [0,1] by construction.
tensor::Tensor composite(const tensor::Tensor& sigmas, const tensor::Tensor& deltas);

/// Midpoint or stratified sample positions for a span; returns n positions
/// and fills deltas with the segment lengths (t_{i+1} - t_i, last one to
/// far).
std::vector<double> sample_positions(double near, double far, int n_samples, bool midpoint,
                                     const std::vector<double>* jitters,
                                     std::vector<double>* deltas);

}  // namespace fluidfm::render
