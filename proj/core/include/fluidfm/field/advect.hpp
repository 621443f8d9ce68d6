#pragma once

#include <functional>

#include "fluidfm/field/fluid_field.hpp"

namespace fluidfm::field {

/// World-space velocity at (point, frame time), in box units per frame.
using VelocityFn = std::function<render::Vec3(const render::Vec3&, double)>;

/// Semi-Lagrangian advection of a density grid [D,H,W] over the box:
/// backtrace one dt per step and trilinearly resample. periodic wraps the
/// box (used by the translation oracle); otherwise backtraces clamp at the
/// walls. Returns n_steps grids, grids[0] being the initial one.
std::vector<std::vector<float>> advect_grids(const std::vector<float>& init,
                                             int64_t d, int64_t h, int64_t w,
                                             const render::Box& box, const VelocityFn& u,
                                             double t0, int64_t n_steps, double dt = 1.0,
                                             bool periodic = false);

/// Field-backed advection: samples sigma(., t0) onto the grid, then advects
/// with the field's velocity, queried at each step time and clamped to the
/// last trained time. Resolution is (d, h, w).
std::vector<std::vector<float>> advect_density(const FluidFieldState& state, double t0,
                                               int64_t n_steps, int64_t d, int64_t h,
                                               int64_t w);

/// sigma sampled on the (d,h,w) grid at frame t (base field, no features).
std::vector<float> sample_density_grid(const FluidFieldState& state, double t, int64_t d,
                                       int64_t h, int64_t w);

/// Field velocity adapter for advect_grids (clamps query times to t_max).
VelocityFn field_velocity(const FluidFieldState& state);

}  // namespace fluidfm::field
