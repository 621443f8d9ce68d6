#include <cmath>

#include "fluidfm/pde/solvers.hpp"
#include "fluidfm/util/errors.hpp"

namespace fluidfm::pde {

namespace {

/// MAC-grid smoke state: sigma at cell centers, velocity on faces.
/// Axes: d (z, up), h (y), w (x); world box [0,1]^3.
struct SmokeState {
  int64_t n;  // cubic grid
  double dx, dt, beta, source_rate, inlet_radius;

  std::vector<double> sigma;        // [n,n,n]
  std::vector<double> ux, uy, uz;   // faces: [n,n,n+1], [n,n+1,n], [n+1,n,n]

  size_t c_at(int64_t d, int64_t h, int64_t w) const { return static_cast<size_t>((d * n + h) * n + w); }
  size_t x_at(int64_t d, int64_t h, int64_t w) const {
    return static_cast<size_t>((d * n + h) * (n + 1) + w);
  }
  size_t y_at(int64_t d, int64_t h, int64_t w) const {
    return static_cast<size_t>((d * (n + 1) + h) * n + w);
  }
  size_t z_at(int64_t d, int64_t h, int64_t w) const { return static_cast<size_t>((d * n + h) * n + w); }
};

double lerp(double a, double b, double t) { return a + (b - a) * t; }

/// Trilinear sample of a lattice whose sample (i,j,k) sits at
/// origin + (i,j,k)*dx along (d,h,w); clamped at the boundary.
double sample_lattice(const std::vector<double>& f, int64_t nd, int64_t nh, int64_t nw,
                      double od, double oh, double ow, double dx, double pd, double ph,
                      double pw) {
  const double fd = std::clamp((pd - od) / dx, 0.0, double(nd - 1));
  const double fh = std::clamp((ph - oh) / dx, 0.0, double(nh - 1));
  const double fw = std::clamp((pw - ow) / dx, 0.0, double(nw - 1));
  const int64_t d0 = std::min<int64_t>(int64_t(fd), nd - 2 < 0 ? 0 : nd - 2);
  const int64_t h0 = std::min<int64_t>(int64_t(fh), nh - 2 < 0 ? 0 : nh - 2);
  const int64_t w0 = std::min<int64_t>(int64_t(fw), nw - 2 < 0 ? 0 : nw - 2);
  const double td = fd - double(d0), th = fh - double(h0), tw = fw - double(w0);
  const int64_t d1 = std::min(d0 + 1, nd - 1), h1 = std::min(h0 + 1, nh - 1),
                w1 = std::min(w0 + 1, nw - 1);
  auto at = [&](int64_t d, int64_t h, int64_t w) {
    return f[static_cast<size_t>((d * nh + h) * nw + w)];
  };
  const double c00 = lerp(at(d0, h0, w0), at(d0, h0, w1), tw);
  const double c01 = lerp(at(d0, h1, w0), at(d0, h1, w1), tw);
  const double c10 = lerp(at(d1, h0, w0), at(d1, h0, w1), tw);
  const double c11 = lerp(at(d1, h1, w0), at(d1, h1, w1), tw);
  return lerp(lerp(c00, c01, th), lerp(c10, c11, th), td);
}

struct SmokeSim {
  SmokeState s;

  explicit SmokeSim(const PdeSpec& spec) {
    s.n = spec.grid[0];
    s.dx = 1.0 / double(s.n);
    s.dt = spec.dt;
    s.beta = spec.param_or("beta", 0.12);
    s.source_rate = spec.param_or("s", 0.8);
    s.inlet_radius = spec.param_or("inlet_radius", 0.15);
    const int64_t n = s.n;
    s.sigma.assign(static_cast<size_t>(n * n * n), 0.0);
    s.ux.assign(static_cast<size_t>(n * n * (n + 1)), 0.0);
    s.uy.assign(static_cast<size_t>(n * (n + 1) * n), 0.0);
    s.uz.assign(static_cast<size_t>((n + 1) * n * n), 0.0);
  }

  // world-space velocity via component-wise staggered interpolation
  double vel_x(double pd, double ph, double pw) const {
    return sample_lattice(s.ux, s.n, s.n, s.n + 1, 0.5 * s.dx, 0.5 * s.dx, 0.0, s.dx, pd, ph,
                          pw);
  }
  double vel_y(double pd, double ph, double pw) const {
    return sample_lattice(s.uy, s.n, s.n + 1, s.n, 0.5 * s.dx, 0.0, 0.5 * s.dx, s.dx, pd, ph,
                          pw);
  }
  double vel_z(double pd, double ph, double pw) const {
    return sample_lattice(s.uz, s.n + 1, s.n, s.n, 0.0, 0.5 * s.dx, 0.5 * s.dx, s.dx, pd, ph,
                          pw);
  }

  void enforce_walls() {
    const int64_t n = s.n;
    for (int64_t d = 0; d < n; ++d) {
      for (int64_t h = 0; h < n; ++h) {
        s.ux[s.x_at(d, h, 0)] = 0.0;
        s.ux[s.x_at(d, h, n)] = 0.0;
      }
    }
    for (int64_t d = 0; d < n; ++d) {
      for (int64_t w = 0; w < n; ++w) {
        s.uy[s.y_at(d, 0, w)] = 0.0;
        s.uy[s.y_at(d, n, w)] = 0.0;
      }
    }
    for (int64_t h = 0; h < n; ++h) {
      for (int64_t w = 0; w < n; ++w) {
        s.uz[s.z_at(0, h, w)] = 0.0;
        s.uz[s.z_at(n, h, w)] = 0.0;
      }
    }
  }

  void advect() {
    const int64_t n = s.n;
    auto backtrace = [&](double pd, double ph, double pw, double& qd, double& qh,
                         double& qw) {
      qd = pd - s.dt * vel_z(pd, ph, pw);
      qh = ph - s.dt * vel_y(pd, ph, pw);
      qw = pw - s.dt * vel_x(pd, ph, pw);
    };
    std::vector<double> nux(s.ux.size()), nuy(s.uy.size()), nuz(s.uz.size()),
        nsigma(s.sigma.size());
    for (int64_t d = 0; d < n; ++d) {
      for (int64_t h = 0; h < n; ++h) {
        for (int64_t w = 0; w <= n; ++w) {
          const double pd = (double(d) + 0.5) * s.dx, ph = (double(h) + 0.5) * s.dx,
                       pw = double(w) * s.dx;
          double qd, qh, qw;
          backtrace(pd, ph, pw, qd, qh, qw);
          nux[s.x_at(d, h, w)] = vel_x(qd, qh, qw);
        }
      }
    }
    for (int64_t d = 0; d < n; ++d) {
      for (int64_t h = 0; h <= n; ++h) {
        for (int64_t w = 0; w < n; ++w) {
          const double pd = (double(d) + 0.5) * s.dx, ph = double(h) * s.dx,
                       pw = (double(w) + 0.5) * s.dx;
          double qd, qh, qw;
          backtrace(pd, ph, pw, qd, qh, qw);
          nuy[s.y_at(d, h, w)] = vel_y(qd, qh, qw);
        }
      }
    }
    for (int64_t d = 0; d <= n; ++d) {
      for (int64_t h = 0; h < n; ++h) {
        for (int64_t w = 0; w < n; ++w) {
          const double pd = double(d) * s.dx, ph = (double(h) + 0.5) * s.dx,
                       pw = (double(w) + 0.5) * s.dx;
          double qd, qh, qw;
          backtrace(pd, ph, pw, qd, qh, qw);
          nuz[s.z_at(d, h, w)] = vel_z(qd, qh, qw);
        }
      }
    }
    for (int64_t d = 0; d < n; ++d) {
      for (int64_t h = 0; h < n; ++h) {
        for (int64_t w = 0; w < n; ++w) {
          const double pd = (double(d) + 0.5) * s.dx, ph = (double(h) + 0.5) * s.dx,
                       pw = (double(w) + 0.5) * s.dx;
          double qd, qh, qw;
          backtrace(pd, ph, pw, qd, qh, qw);
          nsigma[s.c_at(d, h, w)] = sample_lattice(s.sigma, n, n, n, 0.5 * s.dx, 0.5 * s.dx,
                                                   0.5 * s.dx, s.dx, qd, qh, qw);
        }
      }
    }
    s.ux.swap(nux);
    s.uy.swap(nuy);
    s.uz.swap(nuz);
    s.sigma.swap(nsigma);
  }

  void add_source_and_buoyancy() {
    const int64_t n = s.n;
    // saturating source over a two-cell-thick bottom disk
    for (int64_t d = 0; d < std::min<int64_t>(2, n); ++d) {
      for (int64_t h = 0; h < n; ++h) {
        for (int64_t w = 0; w < n; ++w) {
          const double y = (double(h) + 0.5) * s.dx - 0.5;
          const double x = (double(w) + 0.5) * s.dx - 0.5;
          if (x * x + y * y < s.inlet_radius * s.inlet_radius) {
            double& sig = s.sigma[s.c_at(d, h, w)];
            sig += s.source_rate * s.dt * (1.0 - sig);
          }
        }
      }
    }
    // Boussinesq buoyancy on interior z-faces
    for (int64_t d = 1; d < n; ++d) {
      for (int64_t h = 0; h < n; ++h) {
        for (int64_t w = 0; w < n; ++w) {
          const double sig_face =
              0.5 * (s.sigma[s.c_at(d - 1, h, w)] + s.sigma[s.c_at(d, h, w)]);
          s.uz[s.z_at(d, h, w)] += s.dt * s.beta * sig_face;
        }
      }
    }
  }

  double divergence(std::vector<double>& div) const {
    const int64_t n = s.n;
    div.resize(static_cast<size_t>(n * n * n));
    double mx = 0.0;
    for (int64_t d = 0; d < n; ++d) {
      for (int64_t h = 0; h < n; ++h) {
        for (int64_t w = 0; w < n; ++w) {
          const double v = (s.ux[s.x_at(d, h, w + 1)] - s.ux[s.x_at(d, h, w)] +
                            s.uy[s.y_at(d, h + 1, w)] - s.uy[s.y_at(d, h, w)] +
                            s.uz[s.z_at(d + 1, h, w)] - s.uz[s.z_at(d, h, w)]) /
                           s.dx;
          div[s.c_at(d, h, w)] = v;
          mx = std::max(mx, std::abs(v));
        }
      }
    }
    return mx;
  }

  /// 7-point Neumann Laplacian applied to cell pressures: A p = -div grad p.
  void apply_laplacian(const std::vector<double>& p, std::vector<double>& out) const {
    const int64_t n = s.n;
    for (int64_t d = 0; d < n; ++d) {
      for (int64_t h = 0; h < n; ++h) {
        for (int64_t w = 0; w < n; ++w) {
          double acc = 0.0;
          const double pc = p[s.c_at(d, h, w)];
          if (w > 0) acc += pc - p[s.c_at(d, h, w - 1)];
          if (w < n - 1) acc += pc - p[s.c_at(d, h, w + 1)];
          if (h > 0) acc += pc - p[s.c_at(d, h - 1, w)];
          if (h < n - 1) acc += pc - p[s.c_at(d, h + 1, w)];
          if (d > 0) acc += pc - p[s.c_at(d - 1, h, w)];
          if (d < n - 1) acc += pc - p[s.c_at(d + 1, h, w)];
          out[s.c_at(d, h, w)] = acc / (s.dx * s.dx);
        }
      }
    }
  }

  void project() {
    enforce_walls();
    const int64_t n = s.n;
    const int64_t cells = n * n * n;
    std::vector<double> rhs;
    divergence(rhs);
    // Neumann problem: remove the nullspace component from the RHS
    double mean = 0.0;
    for (double v : rhs) mean += v;
    mean /= double(cells);
    double rhs_norm2 = 0.0;
    for (double& v : rhs) {
      v = -(v - mean) / s.dt;
      rhs_norm2 += v * v;
    }
    if (rhs_norm2 < 1e-300) return;

    std::vector<double> p(static_cast<size_t>(cells), 0.0), r = rhs, z(static_cast<size_t>(cells)), ap(static_cast<size_t>(cells));
    std::vector<double> dir = r;
    double rr = rhs_norm2;
    const double tol2 = std::max(1e-24 * rhs_norm2, 1e-280);
    const int max_iters = 4000;
    int it = 0;
    for (; it < max_iters && rr > tol2; ++it) {
      apply_laplacian(dir, ap);
      double dad = 0.0;
      for (int64_t i = 0; i < cells; ++i) dad += dir[static_cast<size_t>(i)] * ap[static_cast<size_t>(i)];
      if (dad <= 0.0) break;
      const double alpha = rr / dad;
      double rr_next = 0.0;
      for (int64_t i = 0; i < cells; ++i) {
        p[static_cast<size_t>(i)] += alpha * dir[static_cast<size_t>(i)];
        r[static_cast<size_t>(i)] -= alpha * ap[static_cast<size_t>(i)];
        rr_next += r[static_cast<size_t>(i)] * r[static_cast<size_t>(i)];
      }
      const double beta = rr_next / rr;
      rr = rr_next;
      for (int64_t i = 0; i < cells; ++i) {
        dir[static_cast<size_t>(i)] = r[static_cast<size_t>(i)] + beta * dir[static_cast<size_t>(i)];
      }
    }
    require(rr <= tol2 * 16.0 || it < max_iters, Err::PoissonNoConverge,
            "pressure CG residual " + std::to_string(std::sqrt(rr)) + " after " +
                std::to_string(it) + " iterations");

    // subtract dt * grad p on interior faces
    for (int64_t d = 0; d < n; ++d) {
      for (int64_t h = 0; h < n; ++h) {
        for (int64_t w = 1; w < n; ++w) {
          s.ux[s.x_at(d, h, w)] -=
              s.dt * (p[s.c_at(d, h, w)] - p[s.c_at(d, h, w - 1)]) / s.dx;
        }
      }
    }
    for (int64_t d = 0; d < n; ++d) {
      for (int64_t h = 1; h < n; ++h) {
        for (int64_t w = 0; w < n; ++w) {
          s.uy[s.y_at(d, h, w)] -=
              s.dt * (p[s.c_at(d, h, w)] - p[s.c_at(d, h - 1, w)]) / s.dx;
        }
      }
    }
    for (int64_t d = 1; d < n; ++d) {
      for (int64_t h = 0; h < n; ++h) {
        for (int64_t w = 0; w < n; ++w) {
          s.uz[s.z_at(d, h, w)] -=
              s.dt * (p[s.c_at(d, h, w)] - p[s.c_at(d - 1, h, w)]) / s.dx;
        }
      }
    }
  }

  double max_speed() const {
    double mx = 0.0;
    for (double v : s.ux) mx = std::max(mx, std::abs(v));
    for (double v : s.uy) mx = std::max(mx, std::abs(v));
    for (double v : s.uz) mx = std::max(mx, std::abs(v));
    return mx;
  }

  void step() {
    advect();
    add_source_and_buoyancy();
    project();
    require(max_speed() * s.dt <= 5.0 * s.dx, Err::CflViolation,
            "smoke displacement bound exceeded");
  }
};

}  // namespace

Trajectory simulate_buoyant_smoke(const PdeSpec& spec, int64_t steps, int64_t record_every,
                                  SmokeDiagnostics* diagnostics) {
  require(spec.family == Family::BuoyantSmoke, Err::InvalidAttr,
          "spec family must be buoyant_smoke");
  spec.validate();
  require(record_every >= 1 && steps % record_every == 0, Err::InvalidAttr,
          "steps must be a multiple of record_every");
  require(spec.grid[0] == spec.grid[1] && spec.grid[1] == spec.grid[2], Err::InvalidAttr,
          "cubic grid expected");
  SmokeSim sim(spec);
  const int64_t n = sim.s.n;

  Trajectory traj;
  traj.spec = spec;
  traj.dims = {steps / record_every + 1, 4, n, n, n};
  traj.values.reserve(static_cast<size_t>(traj.dims[0] * 4 * n * n * n));
  traj.channel_names = {"sigma", "vx", "vy", "vz"};
  traj.dt = spec.dt * double(record_every);
  traj.dx = sim.s.dx;

  auto record = [&]() {
    const auto& st = sim.s;
    for (double v : st.sigma) traj.values.push_back(float(v));
    for (int64_t d = 0; d < n; ++d) {
      for (int64_t h = 0; h < n; ++h) {
        for (int64_t w = 0; w < n; ++w) {
          traj.values.push_back(
              float(0.5 * (st.ux[st.x_at(d, h, w)] + st.ux[st.x_at(d, h, w + 1)])));
        }
      }
    }
    for (int64_t d = 0; d < n; ++d) {
      for (int64_t h = 0; h < n; ++h) {
        for (int64_t w = 0; w < n; ++w) {
          traj.values.push_back(
              float(0.5 * (st.uy[st.y_at(d, h, w)] + st.uy[st.y_at(d, h + 1, w)])));
        }
      }
    }
    for (int64_t d = 0; d < n; ++d) {
      for (int64_t h = 0; h < n; ++h) {
        for (int64_t w = 0; w < n; ++w) {
          traj.values.push_back(
              float(0.5 * (st.uz[st.z_at(d, h, w)] + st.uz[st.z_at(d + 1, h, w)])));
        }
      }
    }
    require(traj.all_finite(), Err::NonFiniteState, "smoke blow-up");
    if (diagnostics != nullptr) {
      std::vector<double> div;
      diagnostics->max_divergence.push_back(sim.divergence(div));
      diagnostics->max_speed.push_back(sim.max_speed());
    }
  };
  record();

  for (int64_t step = 1; step <= steps; ++step) {
    sim.step();
    if (step % record_every == 0) record();
  }
  return traj;
}

}  // namespace fluidfm::pde
