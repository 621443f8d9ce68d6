#include <cmath>

#include "fluidfm/pde/solvers.hpp"
#include "fluidfm/util/errors.hpp"

namespace fluidfm::pde {

namespace {

constexpr int kNv = 4;  // (rho, rho*u, rho*v, E)

struct CnsGrid {
  int64_t h, w;
  double dx, dt, gamma, nu, zeta;

  size_t at(int64_t i, int64_t j, int v) const {
    return static_cast<size_t>(((i * w) + j) * kNv + v);
  }
  int64_t wrap_i(int64_t i) const { return (i % h + h) % h; }
  int64_t wrap_j(int64_t j) const { return (j % w + w) % w; }
};

double minmod(double a, double b) {
  if (a * b <= 0.0) return 0.0;
  return std::abs(a) < std::abs(b) ? a : b;
}

struct Prim {
  double rho, u, v, p, c;
};

Prim primitive(const double* q, double gamma) {
  Prim s;
  s.rho = q[0];
  s.u = q[1] / q[0];
  s.v = q[2] / q[0];
  const double kinetic = 0.5 * s.rho * (s.u * s.u + s.v * s.v);
  s.p = (gamma - 1.0) * (q[3] - kinetic);
  s.c = std::sqrt(gamma * std::max(s.p, 1e-12) / std::max(s.rho, 1e-12));
  return s;
}

void flux_x(const double* q, const Prim& s, double* f) {
  f[0] = q[1];
  f[1] = q[1] * s.u + s.p;
  f[2] = q[2] * s.u;
  f[3] = (q[3] + s.p) * s.u;
}

void flux_y(const double* q, const Prim& s, double* f) {
  f[0] = q[2];
  f[1] = q[1] * s.v;
  f[2] = q[2] * s.v + s.p;
  f[3] = (q[3] + s.p) * s.v;
}

/// Conservative RHS: minmod-limited LLF fluxes plus central viscous sources.
void rhs(const CnsGrid& g, const std::vector<double>& q, std::vector<double>& out) {
  const int64_t h = g.h, w = g.w;
  out.assign(q.size(), 0.0);

  // advective fluxes, x then y
  std::vector<double> slopes(q.size());
  auto limited_slopes = [&](bool along_x) {
    for (int64_t i = 0; i < h; ++i) {
      for (int64_t j = 0; j < w; ++j) {
        for (int v = 0; v < kNv; ++v) {
          const double c = q[g.at(i, j, v)];
          const double m = along_x ? q[g.at(i, g.wrap_j(j - 1), v)]
                                   : q[g.at(g.wrap_i(i - 1), j, v)];
          const double p = along_x ? q[g.at(i, g.wrap_j(j + 1), v)]
                                   : q[g.at(g.wrap_i(i + 1), j, v)];
          slopes[g.at(i, j, v)] = minmod(p - c, c - m);
        }
      }
    }
  };

  std::vector<double> fint(static_cast<size_t>(h * w * kNv));  // flux at the (i, j-1/2) interface
  limited_slopes(true);
  for (int64_t i = 0; i < h; ++i) {
    for (int64_t j = 0; j < w; ++j) {
      const int64_t jm = g.wrap_j(j - 1);
      double ql[kNv], qr[kNv], fl[kNv], fr[kNv];
      for (int v = 0; v < kNv; ++v) {
        ql[v] = q[g.at(i, jm, v)] + 0.5 * slopes[g.at(i, jm, v)];
        qr[v] = q[g.at(i, j, v)] - 0.5 * slopes[g.at(i, j, v)];
      }
      const Prim sl = primitive(ql, g.gamma), sr = primitive(qr, g.gamma);
      flux_x(ql, sl, fl);
      flux_x(qr, sr, fr);
      const double a = std::max(std::abs(sl.u) + sl.c, std::abs(sr.u) + sr.c);
      for (int v = 0; v < kNv; ++v) {
        fint[g.at(i, j, v)] = 0.5 * (fl[v] + fr[v]) - 0.5 * a * (qr[v] - ql[v]);
      }
    }
  }
  for (int64_t i = 0; i < h; ++i) {
    for (int64_t j = 0; j < w; ++j) {
      const int64_t jp = g.wrap_j(j + 1);
      for (int v = 0; v < kNv; ++v) {
        out[g.at(i, j, v)] -= (fint[g.at(i, jp, v)] - fint[g.at(i, j, v)]) / g.dx;
      }
    }
  }

  limited_slopes(false);
  for (int64_t i = 0; i < h; ++i) {
    const int64_t im = g.wrap_i(i - 1);
    for (int64_t j = 0; j < w; ++j) {
      double ql[kNv], qr[kNv], fl[kNv], fr[kNv];
      for (int v = 0; v < kNv; ++v) {
        ql[v] = q[g.at(im, j, v)] + 0.5 * slopes[g.at(im, j, v)];
        qr[v] = q[g.at(i, j, v)] - 0.5 * slopes[g.at(i, j, v)];
      }
      const Prim sl = primitive(ql, g.gamma), sr = primitive(qr, g.gamma);
      flux_y(ql, sl, fl);
      flux_y(qr, sr, fr);
      const double a = std::max(std::abs(sl.v) + sl.c, std::abs(sr.v) + sr.c);
      for (int v = 0; v < kNv; ++v) {
        fint[g.at(i, j, v)] = 0.5 * (fl[v] + fr[v]) - 0.5 * a * (qr[v] - ql[v]);
      }
    }
  }
  for (int64_t i = 0; i < h; ++i) {
    const int64_t ip = g.wrap_i(i + 1);
    for (int64_t j = 0; j < w; ++j) {
      for (int v = 0; v < kNv; ++v) {
        out[g.at(i, j, v)] -= (fint[g.at(ip, j, v)] - fint[g.at(i, j, v)]) / g.dx;
      }
    }
  }

  // viscous sources on velocity (constant dynamic viscosities):
  //   momentum += nu * lap(u) + (zeta + nu/3) * grad(div u)
  //   energy   += div(u . tau), tau the full Newtonian stress
  if (g.nu == 0.0 && g.zeta == 0.0) return;
  const int64_t hw = h * w;
  std::vector<double> u(static_cast<size_t>(hw)), v(static_cast<size_t>(hw));
  for (int64_t i = 0; i < h; ++i) {
    for (int64_t j = 0; j < w; ++j) {
      const double rho = q[g.at(i, j, 0)];
      u[static_cast<size_t>(i * w + j)] = q[g.at(i, j, 1)] / rho;
      v[static_cast<size_t>(i * w + j)] = q[g.at(i, j, 2)] / rho;
    }
  }
  auto f_at = [&](const std::vector<double>& f, int64_t i, int64_t j) {
    return f[static_cast<size_t>(g.wrap_i(i) * w + g.wrap_j(j))];
  };
  auto ddx = [&](const std::vector<double>& f, int64_t i, int64_t j) {
    return (f_at(f, i, j + 1) - f_at(f, i, j - 1)) / (2.0 * g.dx);
  };
  auto ddy = [&](const std::vector<double>& f, int64_t i, int64_t j) {
    return (f_at(f, i + 1, j) - f_at(f, i - 1, j)) / (2.0 * g.dx);
  };
  auto lap = [&](const std::vector<double>& f, int64_t i, int64_t j) {
    return (f_at(f, i, j + 1) + f_at(f, i, j - 1) + f_at(f, i + 1, j) + f_at(f, i - 1, j) -
            4.0 * f_at(f, i, j)) /
           (g.dx * g.dx);
  };

  std::vector<double> divu(static_cast<size_t>(hw)), txx(static_cast<size_t>(hw)), txy(static_cast<size_t>(hw)), tyy(static_cast<size_t>(hw));
  std::vector<double> wx(static_cast<size_t>(hw)), wy(static_cast<size_t>(hw));  // u . tau components
  for (int64_t i = 0; i < h; ++i) {
    for (int64_t j = 0; j < w; ++j) {
      const double dux = ddx(u, i, j), duy = ddy(u, i, j);
      const double dvx = ddx(v, i, j), dvy = ddy(v, i, j);
      const double div = dux + dvy;
      const size_t c = static_cast<size_t>(i * w + j);
      divu[c] = div;
      txx[c] = g.nu * (2.0 * dux - 2.0 / 3.0 * div) + g.zeta * div;
      tyy[c] = g.nu * (2.0 * dvy - 2.0 / 3.0 * div) + g.zeta * div;
      txy[c] = g.nu * (duy + dvx);
      wx[c] = u[c] * txx[c] + v[c] * txy[c];
      wy[c] = u[c] * txy[c] + v[c] * tyy[c];
    }
  }
  const double bulk = g.zeta + g.nu / 3.0;
  for (int64_t i = 0; i < h; ++i) {
    for (int64_t j = 0; j < w; ++j) {
      out[g.at(i, j, 1)] += g.nu * lap(u, i, j) + bulk * ddx(divu, i, j);
      out[g.at(i, j, 2)] += g.nu * lap(v, i, j) + bulk * ddy(divu, i, j);
      out[g.at(i, j, 3)] += ddx(wx, i, j) + ddy(wy, i, j);
    }
  }
}

}  // namespace

Trajectory simulate_compressible_ns(const PdeSpec& spec, std::span<const double> init,
                                    int64_t steps, int64_t record_every,
                                    std::vector<double>* mass_history) {
  require(spec.family == Family::CompressibleNs, Err::InvalidAttr,
          "spec family must be compressible_ns");
  spec.validate();
  require(spec.boundary == Boundary::Periodic, Err::InvalidAttr,
          "compressible solver is periodic");
  require(record_every >= 1 && steps % record_every == 0, Err::InvalidAttr,
          "steps must be a multiple of record_every");
  CnsGrid g;
  g.h = spec.grid[0];
  g.w = spec.grid[1];
  g.dx = spec.dx();
  g.dt = spec.dt;
  g.gamma = spec.param_or("Gamma", 5.0 / 3.0);
  g.nu = spec.param_or("nu", 0.01);
  g.zeta = spec.param_or("zeta", 0.01);
  const int64_t hw = g.h * g.w;

  // primitive initial state (vx, vy, p, rho)
  std::vector<double> prim(static_cast<size_t>(4 * hw));
  if (init.empty()) {
    Rng rng(spec.seed);
    Rng r1 = rng.split("cns_u"), r2 = rng.split("cns_v"), r3 = rng.split("cns_p"),
        r4 = rng.split("cns_rho");
    auto fu = band_limited_field(g.h, g.w, 8, r1);
    auto fv = band_limited_field(g.h, g.w, 8, r2);
    auto fp = band_limited_field(g.h, g.w, 8, r3);
    auto fr = band_limited_field(g.h, g.w, 8, r4);
    const double cs = std::sqrt(g.gamma);  // background rho = p = 1
    const double mach = spec.param_or("M", 1.0);
    double mx = 0.0;
    for (int64_t i = 0; i < hw; ++i) {
      mx = std::max(mx, std::hypot(fu[static_cast<size_t>(i)], fv[static_cast<size_t>(i)]));
    }
    const double vel_scale = mx > 0 ? mach * cs / mx : 0.0;
    for (int64_t i = 0; i < hw; ++i) {
      prim[static_cast<size_t>(i)] = vel_scale * fu[static_cast<size_t>(i)];
      prim[static_cast<size_t>(hw + i)] = vel_scale * fv[static_cast<size_t>(i)];
      prim[static_cast<size_t>(2 * hw + i)] = 1.0 + 0.1 * fp[static_cast<size_t>(i)];
      prim[static_cast<size_t>(3 * hw + i)] = 1.0 + 0.1 * fr[static_cast<size_t>(i)];
    }
  } else {
    require(init.size() == static_cast<size_t>(4 * hw), Err::ShapeMismatch, "init must be [4,H,W]");
    std::copy(init.begin(), init.end(), prim.begin());
  }
  for (int64_t i = 0; i < hw; ++i) {
    require(prim[static_cast<size_t>(2 * hw + i)] > 0 && prim[static_cast<size_t>(3 * hw + i)] > 0, Err::PositivityLoss,
            "initial pressure and density must be positive");
  }

  // conservative state
  std::vector<double> q(static_cast<size_t>(hw * kNv));
  for (int64_t i = 0; i < hw; ++i) {
    const double u = prim[static_cast<size_t>(i)], v = prim[static_cast<size_t>(hw + i)];
    const double p = prim[static_cast<size_t>(2 * hw + i)], rho = prim[static_cast<size_t>(3 * hw + i)];
    q[static_cast<size_t>(i * kNv + 0)] = rho;
    q[static_cast<size_t>(i * kNv + 1)] = rho * u;
    q[static_cast<size_t>(i * kNv + 2)] = rho * v;
    q[static_cast<size_t>(i * kNv + 3)] = p / (g.gamma - 1.0) + 0.5 * rho * (u * u + v * v);
  }

  Trajectory traj;
  traj.spec = spec;
  traj.dims = {steps / record_every + 1, 4, g.h, g.w};
  traj.values.reserve(static_cast<size_t>(traj.dims[0] * 4 * hw));
  traj.channel_names = {"vx", "vy", "p", "rho"};
  traj.dt = spec.dt * double(record_every);
  traj.dx = g.dx;

  auto check_and_record = [&](int64_t step) {
    double wave_max = 0.0;
    std::vector<float> frame(static_cast<size_t>(4 * hw));
    for (int64_t i = 0; i < hw; ++i) {
      const Prim s = primitive(&q[static_cast<size_t>(i * kNv)], g.gamma);
      require(s.rho > 0.0 && s.p > 0.0, Err::PositivityLoss,
              "density or pressure lost positivity at step " + std::to_string(step));
      require(std::isfinite(s.u) && std::isfinite(s.v) && std::isfinite(s.p),
              Err::NonFiniteState, "compressible NS blow-up");
      wave_max = std::max({wave_max, std::abs(s.u) + s.c, std::abs(s.v) + s.c});
      frame[static_cast<size_t>(i)] = float(s.u);
      frame[static_cast<size_t>(hw + i)] = float(s.v);
      frame[static_cast<size_t>(2 * hw + i)] = float(s.p);
      frame[static_cast<size_t>(3 * hw + i)] = float(s.rho);
    }
    require(wave_max * g.dt <= 0.4 * g.dx + 1e-12, Err::CflViolation,
            "acoustic CFL exceeded at step " + std::to_string(step));
    traj.values.insert(traj.values.end(), frame.begin(), frame.end());
    if (mass_history != nullptr) {
      double mass = 0.0;
      for (int64_t i = 0; i < hw; ++i) mass += q[static_cast<size_t>(i * kNv)];
      mass_history->push_back(mass * g.dx * g.dx);
    }
  };
  check_and_record(0);

  std::vector<double> l1, q1(q.size());
  for (int64_t step = 1; step <= steps; ++step) {
    rhs(g, q, l1);
    for (size_t i = 0; i < q.size(); ++i) q1[i] = q[i] + g.dt * l1[i];
    rhs(g, q1, l1);
    for (size_t i = 0; i < q.size(); ++i) q[i] = 0.5 * (q[i] + q1[i] + g.dt * l1[i]);
    if (step % record_every == 0) check_and_record(step);
  }
  return traj;
}

double total_mass(const Trajectory& traj, int64_t t) {
  int64_t channel = -1;
  for (size_t c = 0; c < traj.channel_names.size(); ++c) {
    if (traj.channel_names[c] == "rho" || traj.channel_names[c] == "h") {
      channel = int64_t(c);
    }
  }
  require(channel >= 0, Err::InvalidAttr, "trajectory has no conserved density channel");
  auto vals = traj.channel(t, channel);
  double acc = 0.0;
  for (float v : vals) acc += double(v);
  return acc * traj.dx * traj.dx;
}

}  // namespace fluidfm::pde
