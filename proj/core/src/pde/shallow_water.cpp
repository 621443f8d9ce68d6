#include <cmath>

#include "fluidfm/pde/solvers.hpp"
#include "fluidfm/util/errors.hpp"

namespace fluidfm::pde {

namespace {

constexpr int kNv = 3;  // (h, hu, hv)

struct SweGrid {
  int64_t n;
  double dx, dt, g;
  Boundary boundary;
  size_t at(int64_t i, int64_t j, int v) const { return static_cast<size_t>((i * n + j) * kNv + v); }
};

struct Edge {
  double h, hu, hv;
};

/// LLF flux through a vertical interface between left/right states, with the
/// x-axis as the flux direction; callers swap components for the y-direction.
Edge llf_flux(double hl, double hul, double hvl, double hr, double hur, double hvr,
              double grav) {
  const double ul = hul / hl, ur = hur / hr;
  const double cl = std::sqrt(grav * hl), cr = std::sqrt(grav * hr);
  const double a = std::max(std::abs(ul) + cl, std::abs(ur) + cr);
  const double fl_h = hul;
  const double fl_hu = hul * ul + 0.5 * grav * hl * hl;
  const double fl_hv = hvl * ul;
  const double fr_h = hur;
  const double fr_hu = hur * ur + 0.5 * grav * hr * hr;
  const double fr_hv = hvr * ur;
  Edge f;
  f.h = 0.5 * (fl_h + fr_h) - 0.5 * a * (hr - hl);
  f.hu = 0.5 * (fl_hu + fr_hu) - 0.5 * a * (hur - hul);
  f.hv = 0.5 * (fl_hv + fr_hv) - 0.5 * a * (hvr - hvl);
  return f;
}

}  // namespace

Trajectory simulate_shallow_water(const PdeSpec& spec, int64_t steps, int64_t record_every,
                                  std::vector<double>* mass_history) {
  require(spec.family == Family::ShallowWater, Err::InvalidAttr,
          "spec family must be shallow_water");
  spec.validate();
  require(record_every >= 1 && steps % record_every == 0, Err::InvalidAttr,
          "steps must be a multiple of record_every");
  require(spec.grid[0] == spec.grid[1], Err::InvalidAttr, "square grid expected");
  SweGrid g;
  g.n = spec.grid[0];
  g.dx = spec.dx();
  g.dt = spec.dt;
  g.g = spec.param_or("g", 1.0);
  g.boundary = spec.boundary;
  const double h0 = spec.param_or("h0", 2.0);
  const double h1 = spec.param_or("h1", 1.0);
  const double r = spec.param_or("r", 0.5);
  const int64_t n = g.n;

  // radial dam break: h = h0 inside the disk, h1 outside; fluid at rest
  std::vector<double> q(static_cast<size_t>(n * n * kNv), 0.0);
  for (int64_t i = 0; i < n; ++i) {
    const double y = spec.domain_min[1] + (double(i) + 0.5) * g.dx;
    for (int64_t j = 0; j < n; ++j) {
      const double x = spec.domain_min[0] + (double(j) + 0.5) * g.dx;
      q[g.at(i, j, 0)] = std::sqrt(x * x + y * y) < r ? h0 : h1;
    }
  }

  Trajectory traj;
  traj.spec = spec;
  traj.dims = {steps / record_every + 1, 1, n, n};
  traj.values.reserve(static_cast<size_t>(traj.dims[0] * n * n));
  traj.channel_names = {"h"};
  traj.dt = spec.dt * double(record_every);
  traj.dx = g.dx;

  auto record = [&](int64_t step) {
    double wave_max = 0.0, mass = 0.0;
    for (int64_t i = 0; i < n * n; ++i) {
      const double h = q[static_cast<size_t>(i * kNv)];
      require(h > 0.0 && std::isfinite(h), Err::NonFiniteState,
              "shallow water blow-up at step " + std::to_string(step));
      const double u = q[static_cast<size_t>(i * kNv + 1)] / h, v = q[static_cast<size_t>(i * kNv + 2)] / h;
      wave_max = std::max(wave_max, std::max(std::abs(u), std::abs(v)) + std::sqrt(g.g * h));
      mass += h;
      traj.values.push_back(float(h));
    }
    require(wave_max * g.dt <= 0.4 * g.dx + 1e-12, Err::CflViolation,
            "gravity-wave CFL exceeded at step " + std::to_string(step));
    if (mass_history != nullptr) mass_history->push_back(mass * g.dx * g.dx);
  };
  record(0);

  // ghost-cell indexing: reflective mirrors the cell and negates the normal
  // momentum; periodic wraps
  auto cell = [&](int64_t i, int64_t j, int v, int normal_axis) -> double {
    double sign = 1.0;
    if (g.boundary == Boundary::Periodic) {
      i = (i % n + n) % n;
      j = (j % n + n) % n;
    } else {
      if (i < 0) {
        i = -i - 1;
        if (v == 2 && normal_axis == 1) sign = -1.0;
      } else if (i >= n) {
        i = 2 * n - i - 1;
        if (v == 2 && normal_axis == 1) sign = -1.0;
      }
      if (j < 0) {
        j = -j - 1;
        if (v == 1 && normal_axis == 0) sign = -1.0;
      } else if (j >= n) {
        j = 2 * n - j - 1;
        if (v == 1 && normal_axis == 0) sign = -1.0;
      }
    }
    return sign * q[g.at(i, j, v)];
  };

  std::vector<double> qn(q.size());
  for (int64_t step = 1; step <= steps; ++step) {
    // x-direction interface fluxes: interface (i, j-1/2) for j in [0, n]
    std::vector<Edge> fx(static_cast<size_t>(n * (n + 1)));
    for (int64_t i = 0; i < n; ++i) {
      for (int64_t j = 0; j <= n; ++j) {
        const double hl = cell(i, j - 1, 0, 0), hul = cell(i, j - 1, 1, 0),
                     hvl = cell(i, j - 1, 2, 0);
        const double hr = cell(i, j, 0, 0), hur = cell(i, j, 1, 0), hvr = cell(i, j, 2, 0);
        fx[static_cast<size_t>(i * (n + 1) + j)] = llf_flux(hl, hul, hvl, hr, hur, hvr, g.g);
      }
    }
    // y-direction: swap the roles of hu and hv so the flux runs along y
    std::vector<Edge> fy(static_cast<size_t>((n + 1) * n));
    for (int64_t i = 0; i <= n; ++i) {
      for (int64_t j = 0; j < n; ++j) {
        const double hl = cell(i - 1, j, 0, 1), hul = cell(i - 1, j, 2, 1),
                     hvl = cell(i - 1, j, 1, 1);
        const double hr = cell(i, j, 0, 1), hur = cell(i, j, 2, 1), hvr = cell(i, j, 1, 1);
        const Edge e = llf_flux(hl, hul, hvl, hr, hur, hvr, g.g);
        fy[static_cast<size_t>(i * n + j)] = Edge{e.h, e.hv, e.hu};  // unswap components
      }
    }
    for (int64_t i = 0; i < n; ++i) {
      for (int64_t j = 0; j < n; ++j) {
        const Edge& fxl = fx[static_cast<size_t>(i * (n + 1) + j)];
        const Edge& fxr = fx[static_cast<size_t>(i * (n + 1) + j + 1)];
        const Edge& fyl = fy[static_cast<size_t>(i * n + j)];
        const Edge& fyr = fy[static_cast<size_t>((i + 1) * n + j)];
        qn[g.at(i, j, 0)] =
            q[g.at(i, j, 0)] - g.dt / g.dx * ((fxr.h - fxl.h) + (fyr.h - fyl.h));
        qn[g.at(i, j, 1)] =
            q[g.at(i, j, 1)] - g.dt / g.dx * ((fxr.hu - fxl.hu) + (fyr.hu - fyl.hu));
        qn[g.at(i, j, 2)] =
            q[g.at(i, j, 2)] - g.dt / g.dx * ((fxr.hv - fxl.hv) + (fyr.hv - fyl.hv));
      }
    }
    q.swap(qn);
    if (step % record_every == 0) record(step);
  }
  return traj;
}

}  // namespace fluidfm::pde
