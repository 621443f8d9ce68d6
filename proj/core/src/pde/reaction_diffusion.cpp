#include <cmath>

#include "fluidfm/pde/solvers.hpp"
#include "fluidfm/util/errors.hpp"

namespace fluidfm::pde {

std::vector<double> band_limited_field(int64_t h, int64_t w, int max_k, Rng& rng) {
  // random low-mode Fourier sum with a gaussian spectral envelope
  struct Mode {
    double kx, ky, amp, phase;
  };
  std::vector<Mode> modes;
  for (int ky = -max_k; ky <= max_k; ++ky) {
    for (int kx = 0; kx <= max_k; ++kx) {
      if (kx == 0 && ky <= 0) continue;  // one representative per conjugate pair
      const double k2 = double(kx * kx + ky * ky);
      if (k2 > double(max_k * max_k)) continue;
      const double envelope = std::exp(-k2 / (0.5 * max_k * max_k));
      modes.push_back({double(kx), double(ky), envelope * rng.normal(),
                       2.0 * M_PI * rng.uniform()});
    }
  }
  std::vector<double> f(static_cast<size_t>(h * w), 0.0);
  double peak = 0.0;
  for (int64_t i = 0; i < h; ++i) {
    const double y = double(i) / double(h);
    for (int64_t j = 0; j < w; ++j) {
      const double x = double(j) / double(w);
      double v = 0.0;
      for (const Mode& m : modes) {
        v += m.amp * std::cos(2.0 * M_PI * (m.kx * x + m.ky * y) + m.phase);
      }
      f[static_cast<size_t>(i * w + j)] = v;
      peak = std::max(peak, std::abs(v));
    }
  }
  if (peak > 0) {
    for (double& v : f) v /= peak;
  }
  return f;
}

namespace {

/// 5-point Laplacian with periodic or reflective (Neumann) closure.
void laplacian(const std::vector<double>& f, std::vector<double>& out, int64_t h, int64_t w,
               double inv_dx2, Boundary boundary) {
  auto idx = [w](int64_t i, int64_t j) { return static_cast<size_t>(i * w + j); };
  for (int64_t i = 0; i < h; ++i) {
    int64_t im = i - 1, ip = i + 1;
    if (boundary == Boundary::Periodic) {
      im = (i + h - 1) % h;
      ip = (i + 1) % h;
    } else {
      im = im < 0 ? 0 : im;
      ip = ip >= h ? h - 1 : ip;
    }
    for (int64_t j = 0; j < w; ++j) {
      int64_t jm = j - 1, jp = j + 1;
      if (boundary == Boundary::Periodic) {
        jm = (j + w - 1) % w;
        jp = (j + 1) % w;
      } else {
        jm = jm < 0 ? 0 : jm;
        jp = jp >= w ? w - 1 : jp;
      }
      out[idx(i, j)] = (f[idx(im, j)] + f[idx(ip, j)] + f[idx(i, jm)] + f[idx(i, jp)] -
                        4.0 * f[idx(i, j)]) *
                       inv_dx2;
    }
  }
}

}  // namespace

Trajectory simulate_reaction_diffusion(const PdeSpec& spec, std::span<const double> init,
                                       int64_t steps, int64_t record_every) {
  require(spec.family == Family::ReactionDiffusion, Err::InvalidAttr,
          "spec family must be reaction_diffusion");
  spec.validate();
  require(record_every >= 1 && steps % record_every == 0, Err::InvalidAttr,
          "steps must be a multiple of record_every");
  const int64_t h = spec.grid[0], w = spec.grid[1];
  const int64_t n = h * w;
  const double du = spec.param("D_u"), dv = spec.param("D_v"), k = spec.param("k");
  const double inv_dx2 = 1.0 / (spec.dx() * spec.dx());

  std::vector<double> u(static_cast<size_t>(n)), v(static_cast<size_t>(n));
  if (init.empty()) {
    Rng rng(spec.seed);
    Rng ru = rng.split("rd_u"), rv = rng.split("rd_v");
    u = band_limited_field(h, w, 8, ru);
    v = band_limited_field(h, w, 8, rv);
    for (auto& x : u) x *= 0.5;
    for (auto& x : v) x *= 0.5;
  } else {
    require(init.size() == static_cast<size_t>(2 * n), Err::ShapeMismatch, "init must be [2,H,W]");
    std::copy(init.begin(), init.begin() + n, u.begin());
    std::copy(init.begin() + n, init.end(), v.begin());
    for (double x : init) {
      require(std::isfinite(x), Err::NonFiniteState, "init contains non-finite values");
    }
  }

  Trajectory traj;
  traj.spec = spec;
  traj.dims = {steps / record_every + 1, 2, h, w};
  traj.values.reserve(static_cast<size_t>(traj.dims[0] * 2 * n));
  traj.channel_names = {"u", "v"};
  traj.dt = spec.dt * double(record_every);
  traj.dx = spec.dx();

  auto record = [&]() {
    for (double x : u) traj.values.push_back(float(x));
    for (double x : v) traj.values.push_back(float(x));
  };
  record();

  std::vector<double> lap_u(static_cast<size_t>(n)), lap_v(static_cast<size_t>(n));
  for (int64_t step = 1; step <= steps; ++step) {
    laplacian(u, lap_u, h, w, inv_dx2, spec.boundary);
    laplacian(v, lap_v, h, w, inv_dx2, spec.boundary);
    for (int64_t i = 0; i < n; ++i) {
      const double ui = u[static_cast<size_t>(i)], vi = v[static_cast<size_t>(i)];
      const double ru = ui - ui * ui * ui - k - vi;
      const double rv = ui - vi;
      u[static_cast<size_t>(i)] = ui + spec.dt * (du * lap_u[static_cast<size_t>(i)] + ru);
      v[static_cast<size_t>(i)] = vi + spec.dt * (dv * lap_v[static_cast<size_t>(i)] + rv);
    }
    if (step % record_every == 0) {
      for (int64_t i = 0; i < n; ++i) {
        require(std::isfinite(u[static_cast<size_t>(i)]) && std::isfinite(v[static_cast<size_t>(i)]),
                Err::NonFiniteState, "reaction-diffusion blow-up at step " +
                                         std::to_string(step));
      }
      record();
    }
  }
  return traj;
}

}  // namespace fluidfm::pde
