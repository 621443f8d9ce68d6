#include "fluidfm/field/advect.hpp"

#include <algorithm>
#include <cmath>

#include "fluidfm/util/errors.hpp"

namespace fluidfm::field {

using render::Box;
using render::Vec3;

namespace {

double sample_grid(const std::vector<float>& g, int64_t d, int64_t h, int64_t w,
                   const Box& box, const Vec3& p, bool periodic) {
  // cell centers at (i+0.5)/n in box coordinates
  double fx = (p[0] - box.lo[0]) / (box.hi[0] - box.lo[0]) * double(w) - 0.5;
  double fy = (p[1] - box.lo[1]) / (box.hi[1] - box.lo[1]) * double(h) - 0.5;
  double fz = (p[2] - box.lo[2]) / (box.hi[2] - box.lo[2]) * double(d) - 0.5;
  auto wrap = [](double v, int64_t n) {
    const double m = std::fmod(v, double(n));
    return m < 0 ? m + double(n) : m;
  };
  int64_t x0, y0, z0, x1, y1, z1;
  double tx, ty, tz;
  if (periodic) {
    fx = wrap(fx, w);
    fy = wrap(fy, h);
    fz = wrap(fz, d);
    x0 = int64_t(fx) % w;
    y0 = int64_t(fy) % h;
    z0 = int64_t(fz) % d;
    tx = fx - std::floor(fx);
    ty = fy - std::floor(fy);
    tz = fz - std::floor(fz);
    x1 = (x0 + 1) % w;
    y1 = (y0 + 1) % h;
    z1 = (z0 + 1) % d;
  } else {
    fx = std::clamp(fx, 0.0, double(w - 1));
    fy = std::clamp(fy, 0.0, double(h - 1));
    fz = std::clamp(fz, 0.0, double(d - 1));
    x0 = std::min<int64_t>(int64_t(fx), std::max<int64_t>(w - 2, 0));
    y0 = std::min<int64_t>(int64_t(fy), std::max<int64_t>(h - 2, 0));
    z0 = std::min<int64_t>(int64_t(fz), std::max<int64_t>(d - 2, 0));
    tx = fx - double(x0);
    ty = fy - double(y0);
    tz = fz - double(z0);
    x1 = std::min(x0 + 1, w - 1);
    y1 = std::min(y0 + 1, h - 1);
    z1 = std::min(z0 + 1, d - 1);
  }
  auto at = [&](int64_t zz, int64_t yy, int64_t xx) {
    return double(g[static_cast<size_t>((zz * h + yy) * w + xx)]);
  };
  const double c00 = at(z0, y0, x0) * (1 - tx) + at(z0, y0, x1) * tx;
  const double c01 = at(z0, y1, x0) * (1 - tx) + at(z0, y1, x1) * tx;
  const double c10 = at(z1, y0, x0) * (1 - tx) + at(z1, y0, x1) * tx;
  const double c11 = at(z1, y1, x0) * (1 - tx) + at(z1, y1, x1) * tx;
  return (c00 * (1 - ty) + c01 * ty) * (1 - tz) + (c10 * (1 - ty) + c11 * ty) * tz;
}

Vec3 cell_center(const Box& box, int64_t d, int64_t h, int64_t w, int64_t zz, int64_t yy,
                 int64_t xx) {
  return {box.lo[0] + (double(xx) + 0.5) / double(w) * (box.hi[0] - box.lo[0]),
          box.lo[1] + (double(yy) + 0.5) / double(h) * (box.hi[1] - box.lo[1]),
          box.lo[2] + (double(zz) + 0.5) / double(d) * (box.hi[2] - box.lo[2])};
}

}  // namespace

std::vector<std::vector<float>> advect_grids(const std::vector<float>& init, int64_t d,
                                             int64_t h, int64_t w, const Box& box,
                                             const VelocityFn& u, double t0,
                                             int64_t n_steps, double dt, bool periodic) {
  require(init.size() == static_cast<size_t>(d * h * w), Err::ShapeMismatch,
          "grid size mismatch");
  require(n_steps >= 1, Err::InvalidAttr, "need at least one step");
  std::vector<std::vector<float>> grids;
  grids.reserve(static_cast<size_t>(n_steps));
  grids.push_back(init);
  for (int64_t step = 1; step < n_steps; ++step) {
    const double t = t0 + double(step - 1) * dt;
    const std::vector<float>& prev = grids.back();
    std::vector<float> next(init.size());
    for (int64_t zz = 0; zz < d; ++zz) {
      for (int64_t yy = 0; yy < h; ++yy) {
        for (int64_t xx = 0; xx < w; ++xx) {
          const Vec3 x = cell_center(box, d, h, w, zz, yy, xx);
          const Vec3 vel = u(x, t);
          const Vec3 back = {x[0] - dt * vel[0], x[1] - dt * vel[1], x[2] - dt * vel[2]};
          next[static_cast<size_t>((zz * h + yy) * w + xx)] =
              float(sample_grid(prev, d, h, w, box, back, periodic));
        }
      }
    }
    grids.push_back(std::move(next));
  }
  return grids;
}

std::vector<float> sample_density_grid(const FluidFieldState& state, double t, int64_t d,
                                       int64_t h, int64_t w) {
  const int64_t n = d * h * w;
  std::vector<double> pts(static_cast<size_t>(n * 4));
  int64_t i = 0;
  for (int64_t zz = 0; zz < d; ++zz) {
    for (int64_t yy = 0; yy < h; ++yy) {
      for (int64_t xx = 0; xx < w; ++xx) {
        const Vec3 x = cell_center(state.box, d, h, w, zz, yy, xx);
        pts[static_cast<size_t>(4 * i)] = x[0];
        pts[static_cast<size_t>(4 * i + 1)] = x[1];
        pts[static_cast<size_t>(4 * i + 2)] = x[2];
        pts[static_cast<size_t>(4 * i + 3)] = t;
        ++i;
      }
    }
  }
  FieldSample s = query_density(state, tensor::Tensor::from_data({n, 4}, std::move(pts)),
                                std::nullopt, {});
  std::vector<float> grid(static_cast<size_t>(n));
  for (int64_t j = 0; j < n; ++j) grid[static_cast<size_t>(j)] = float(s.value.at(j));
  return grid;
}

VelocityFn field_velocity(const FluidFieldState& state) {
  return [&state](const Vec3& p, double t) -> Vec3 {
    const double tc = std::clamp(t, 0.0, state.t_max);
    tensor::Tensor pts =
        tensor::Tensor::from_data({1, 4}, {p[0], p[1], p[2], tc});
    FieldSample s = query_velocity(state, pts, {});
    return {s.value.at(0), s.value.at(1), s.value.at(2)};
  };
}

std::vector<std::vector<float>> advect_density(const FluidFieldState& state, double t0,
                                               int64_t n_steps, int64_t d, int64_t h,
                                               int64_t w) {
  require(t0 >= 0.0 && t0 <= state.t_max, Err::InvalidAttr,
          "t0 outside the trained time range");
  std::vector<float> init = sample_density_grid(state, t0, d, h, w);
  // batched velocity queries per step (one tensor pipeline per frame)
  const int64_t n = d * h * w;
  std::vector<std::vector<float>> grids;
  grids.reserve(static_cast<size_t>(n_steps));
  grids.push_back(std::move(init));
  std::vector<double> pts(static_cast<size_t>(n * 4));
  for (int64_t step = 1; step < n_steps; ++step) {
    const double t = std::clamp(t0 + double(step - 1), 0.0, state.t_max);
    int64_t i = 0;
    for (int64_t zz = 0; zz < d; ++zz) {
      for (int64_t yy = 0; yy < h; ++yy) {
        for (int64_t xx = 0; xx < w; ++xx) {
          const Vec3 x = cell_center(state.box, d, h, w, zz, yy, xx);
          pts[static_cast<size_t>(4 * i)] = x[0];
          pts[static_cast<size_t>(4 * i + 1)] = x[1];
          pts[static_cast<size_t>(4 * i + 2)] = x[2];
          pts[static_cast<size_t>(4 * i + 3)] = t;
          ++i;
        }
      }
    }
    FieldSample vel = query_velocity(
        state, tensor::Tensor::from_data({n, 4}, std::vector<double>(pts)), {});
    const std::vector<float>& prev = grids.back();
    std::vector<float> next(static_cast<size_t>(n));
    i = 0;
    for (int64_t zz = 0; zz < d; ++zz) {
      for (int64_t yy = 0; yy < h; ++yy) {
        for (int64_t xx = 0; xx < w; ++xx) {
          const Vec3 x = cell_center(state.box, d, h, w, zz, yy, xx);
          const Vec3 back = {x[0] - vel.value.at(3 * i), x[1] - vel.value.at(3 * i + 1),
                             x[2] - vel.value.at(3 * i + 2)};
          next[static_cast<size_t>(i)] = float(sample_grid(prev, d, h, w, state.box, back,
                                                           /*periodic=*/false));
          ++i;
        }
      }
    }
    grids.push_back(std::move(next));
  }
  return grids;
}

}  // namespace fluidfm::field
