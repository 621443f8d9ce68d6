#include <fftw3.h>

#include <cmath>
#include <complex>
#include <mutex>

#include "fluidfm/pde/solvers.hpp"
#include "fluidfm/util/errors.hpp"

namespace fluidfm::pde {

namespace {

std::mutex g_fftw_mutex;  // FFTW plan creation is not thread-safe

using cplx = std::complex<double>;

/// Periodic pseudo-spectral workspace on an n x n torus of side 2*pi.
class Spectral2D {
 public:
  explicit Spectral2D(int64_t n) : n_(n), nc_(n / 2 + 1) {
    real_ = fftw_alloc_real(static_cast<size_t>(n_ * n_));
    cplx_ = fftw_alloc_complex(static_cast<size_t>(n_ * nc_));
    std::lock_guard lock(g_fftw_mutex);
    fwd_ = fftw_plan_dft_r2c_2d(int(n_), int(n_), real_, cplx_, FFTW_ESTIMATE);
    bwd_ = fftw_plan_dft_c2r_2d(int(n_), int(n_), cplx_, real_, FFTW_ESTIMATE);
  }
  ~Spectral2D() {
    std::lock_guard lock(g_fftw_mutex);
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(bwd_);
    fftw_free(real_);
    fftw_free(cplx_);
  }
  Spectral2D(const Spectral2D&) = delete;
  Spectral2D& operator=(const Spectral2D&) = delete;

  int64_t n() const { return n_; }
  int64_t nc() const { return nc_; }
  int64_t spectral_size() const { return n_ * nc_; }

  double kx(int64_t j) const { return double(j); }
  double ky(int64_t i) const { return i <= n_ / 2 ? double(i) : double(i - n_); }

  void forward(const std::vector<double>& in, std::vector<cplx>& out) {
    std::copy(in.begin(), in.end(), real_);
    fftw_execute(fwd_);
    out.resize(static_cast<size_t>(spectral_size()));
    const double scale = 1.0 / double(n_ * n_);
    for (int64_t i = 0; i < spectral_size(); ++i) {
      out[static_cast<size_t>(i)] = cplx(cplx_[i][0], cplx_[i][1]) * scale;
    }
  }

  void inverse(const std::vector<cplx>& in, std::vector<double>& out) {
    for (int64_t i = 0; i < spectral_size(); ++i) {
      cplx_[i][0] = in[static_cast<size_t>(i)].real();
      cplx_[i][1] = in[static_cast<size_t>(i)].imag();
    }
    fftw_execute(bwd_);
    out.assign(real_, real_ + n_ * n_);
  }

  void dealias(std::vector<cplx>& f) const {
    const double cutoff = double(n_) / 3.0;
    for (int64_t i = 0; i < n_; ++i) {
      for (int64_t j = 0; j < nc_; ++j) {
        if (std::abs(ky(i)) > cutoff || kx(j) > cutoff) {
          f[static_cast<size_t>(i * nc_ + j)] = 0.0;
        }
      }
    }
  }

  /// Leray projection: removes the divergent part in place.
  void project(std::vector<cplx>& fx, std::vector<cplx>& fy) const {
    for (int64_t i = 0; i < n_; ++i) {
      for (int64_t j = 0; j < nc_; ++j) {
        const double kxx = kx(j), kyy = ky(i);
        const double k2 = kxx * kxx + kyy * kyy;
        if (k2 == 0.0) continue;
        const size_t idx = static_cast<size_t>(i * nc_ + j);
        const cplx kdotf = kxx * fx[idx] + kyy * fy[idx];
        fx[idx] -= kxx * kdotf / k2;
        fy[idx] -= kyy * kdotf / k2;
      }
    }
  }

 private:
  int64_t n_, nc_;
  double* real_;
  fftw_complex* cplx_;
  fftw_plan fwd_, bwd_;
};

struct NonlinearTerm {
  std::vector<cplx> nx, ny;      // projected, dealiased
  std::vector<cplx> pressure;    // recovered from the projection
};

void nonlinear(Spectral2D& sp, const std::vector<cplx>& ux, const std::vector<cplx>& uy,
               NonlinearTerm& out, std::vector<double>* phys_speed_max) {
  const int64_t n = sp.n(), nc = sp.nc(), m = sp.spectral_size();
  auto deriv = [&](const std::vector<cplx>& f, bool along_x, std::vector<double>& dst) {
    std::vector<cplx> tmp(static_cast<size_t>(m));
    for (int64_t i = 0; i < n; ++i) {
      for (int64_t j = 0; j < nc; ++j) {
        const double k = along_x ? sp.kx(j) : sp.ky(i);
        tmp[static_cast<size_t>(i * nc + j)] = cplx(0.0, k) * f[static_cast<size_t>(i * nc + j)];
      }
    }
    sp.inverse(tmp, dst);
  };
  std::vector<double> u, v, ux_x, ux_y, uy_x, uy_y;
  sp.inverse(ux, u);
  sp.inverse(uy, v);
  deriv(ux, true, ux_x);
  deriv(ux, false, ux_y);
  deriv(uy, true, uy_x);
  deriv(uy, false, uy_y);
  if (phys_speed_max != nullptr) {
    double mx = 0.0;
    for (int64_t i = 0; i < n * n; ++i) {
      mx = std::max(mx, std::hypot(u[static_cast<size_t>(i)], v[static_cast<size_t>(i)]));
    }
    phys_speed_max->push_back(mx);
  }
  std::vector<double> fx(static_cast<size_t>(n * n)), fy(static_cast<size_t>(n * n));
  for (int64_t i = 0; i < n * n; ++i) {
    fx[static_cast<size_t>(i)] = -(u[static_cast<size_t>(i)] * ux_x[static_cast<size_t>(i)] + v[static_cast<size_t>(i)] * ux_y[static_cast<size_t>(i)]);
    fy[static_cast<size_t>(i)] = -(u[static_cast<size_t>(i)] * uy_x[static_cast<size_t>(i)] + v[static_cast<size_t>(i)] * uy_y[static_cast<size_t>(i)]);
  }
  sp.forward(fx, out.nx);
  sp.forward(fy, out.ny);
  sp.dealias(out.nx);
  sp.dealias(out.ny);
  // pressure from the divergent part: i k p = (I - P) N
  out.pressure.assign(static_cast<size_t>(m), cplx(0.0, 0.0));
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = 0; j < nc; ++j) {
      const double kxx = sp.kx(j), kyy = sp.ky(i);
      const double k2 = kxx * kxx + kyy * kyy;
      if (k2 == 0.0) continue;
      const size_t idx = static_cast<size_t>(i * nc + j);
      const cplx kdotn = kxx * out.nx[idx] + kyy * out.ny[idx];
      out.pressure[idx] = cplx(0.0, -1.0) * kdotn / k2;
    }
  }
  sp.project(out.nx, out.ny);
}

}  // namespace

Trajectory simulate_incompressible_ns(const PdeSpec& spec,
                                      std::span<const double> init_velocity, int64_t steps,
                                      int64_t record_every, InsDiagnostics* diagnostics) {
  require(spec.family == Family::IncompressibleNs, Err::InvalidAttr,
          "spec family must be incompressible_ns");
  spec.validate();
  require(record_every >= 1 && steps % record_every == 0, Err::InvalidAttr,
          "steps must be a multiple of record_every");
  require(spec.grid[0] == spec.grid[1], Err::InvalidAttr, "spectral solver needs square grid");
  const int64_t n = spec.grid[0];
  const double nu = spec.param("nu");
  Spectral2D sp(n);

  std::vector<double> u(static_cast<size_t>(n * n)), v(static_cast<size_t>(n * n));
  if (init_velocity.empty()) {
    Rng rng(spec.seed);
    Rng rpsi = rng.split("ins_psi");
    std::vector<double> psi = band_limited_field(n, n, 8, rpsi);
    std::vector<cplx> psih;
    sp.forward(psi, psih);
    std::vector<cplx> uxh(psih.size()), uyh(psih.size());
    for (int64_t i = 0; i < n; ++i) {
      for (int64_t j = 0; j < sp.nc(); ++j) {
        const size_t idx = static_cast<size_t>(i * sp.nc() + j);
        uxh[idx] = cplx(0.0, sp.ky(i)) * psih[idx];    // u = d(psi)/dy
        uyh[idx] = cplx(0.0, -sp.kx(j)) * psih[idx];   // v = -d(psi)/dx
      }
    }
    sp.inverse(uxh, u);
    sp.inverse(uyh, v);
    double mx = 0.0;
    for (int64_t i = 0; i < n * n; ++i) {
      mx = std::max(mx, std::hypot(u[static_cast<size_t>(i)], v[static_cast<size_t>(i)]));
    }
    if (mx > 0) {
      for (auto& x : u) x /= mx;
      for (auto& x : v) x /= mx;
    }
  } else {
    require(init_velocity.size() == static_cast<size_t>(2 * n * n), Err::ShapeMismatch,
            "init velocity must be [2,H,W]");
    std::copy(init_velocity.begin(), init_velocity.begin() + n * n, u.begin());
    std::copy(init_velocity.begin() + n * n, init_velocity.end(), v.begin());
  }

  std::vector<cplx> ux, uy;
  sp.forward(u, ux);
  sp.forward(v, uy);
  sp.dealias(ux);
  sp.dealias(uy);
  {
    // divergence-free precondition: measure before projecting
    double div_max = 0.0;
    std::vector<cplx> divh(ux.size());
    for (int64_t i = 0; i < n; ++i) {
      for (int64_t j = 0; j < sp.nc(); ++j) {
        const size_t idx = static_cast<size_t>(i * sp.nc() + j);
        divh[idx] = cplx(0.0, sp.kx(j)) * ux[idx] + cplx(0.0, sp.ky(i)) * uy[idx];
      }
    }
    std::vector<double> divp;
    sp.inverse(divh, divp);
    for (double d : divp) div_max = std::max(div_max, std::abs(d));
    require(div_max < 1e-8, Err::InvalidAttr,
            "initial velocity is not divergence-free: max|div| = " + std::to_string(div_max));
  }
  sp.project(ux, uy);

  Trajectory traj;
  traj.spec = spec;
  traj.dims = {steps / record_every + 1, 3, n, n};
  traj.values.reserve(static_cast<size_t>(traj.dims[0] * 3 * n * n));
  traj.channel_names = {"vx", "vy", "p"};
  traj.dt = spec.dt * double(record_every);
  traj.dx = spec.dx();

  NonlinearTerm k1, k2;
  std::vector<double> pressure(static_cast<size_t>(n * n), 0.0);
  auto state_divergence = [&]() {
    std::vector<cplx> divh(ux.size());
    for (int64_t i = 0; i < n; ++i) {
      for (int64_t j = 0; j < sp.nc(); ++j) {
        const size_t idx = static_cast<size_t>(i * sp.nc() + j);
        divh[idx] = cplx(0.0, sp.kx(j)) * ux[idx] + cplx(0.0, sp.ky(i)) * uy[idx];
      }
    }
    std::vector<double> divp;
    sp.inverse(divh, divp);
    double mx = 0.0;
    for (double d : divp) mx = std::max(mx, std::abs(d));
    return mx;
  };
  auto record = [&]() {
    std::vector<double> pu, pv;
    sp.inverse(ux, pu);
    sp.inverse(uy, pv);
    for (double x : pu) traj.values.push_back(float(x));
    for (double x : pv) traj.values.push_back(float(x));
    for (double x : pressure) traj.values.push_back(float(x));
    require(traj.all_finite(), Err::NonFiniteState, "incompressible NS blow-up");
    if (diagnostics != nullptr) {
      diagnostics->max_divergence.push_back(state_divergence());
      double mx = 0.0;
      for (int64_t i = 0; i < n * n; ++i) {
        mx = std::max(mx, std::hypot(pu[static_cast<size_t>(i)], pv[static_cast<size_t>(i)]));
      }
      diagnostics->max_speed.push_back(mx);
    }
  };
  record();

  const int64_t m = sp.spectral_size();
  std::vector<double> efull(static_cast<size_t>(m));
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = 0; j < sp.nc(); ++j) {
      const double k2v = sp.kx(j) * sp.kx(j) + sp.ky(i) * sp.ky(i);
      efull[static_cast<size_t>(i * sp.nc() + j)] = std::exp(-nu * k2v * spec.dt);
    }
  }

  std::vector<double> speed_hist;
  std::vector<cplx> u1(static_cast<size_t>(m)), v1(static_cast<size_t>(m));
  for (int64_t step = 1; step <= steps; ++step) {
    speed_hist.clear();
    nonlinear(sp, ux, uy, k1, &speed_hist);
    require(speed_hist.back() * spec.dt <= 0.4 * spec.dx() + 1e-12, Err::CflViolation,
            "advective CFL exceeded at step " + std::to_string(step));
    for (int64_t i = 0; i < m; ++i) {
      const double e = efull[static_cast<size_t>(i)];
      u1[static_cast<size_t>(i)] = e * (ux[static_cast<size_t>(i)] + spec.dt * k1.nx[static_cast<size_t>(i)]);
      v1[static_cast<size_t>(i)] = e * (uy[static_cast<size_t>(i)] + spec.dt * k1.ny[static_cast<size_t>(i)]);
    }
    nonlinear(sp, u1, v1, k2, nullptr);
    for (int64_t i = 0; i < m; ++i) {
      const double e = efull[static_cast<size_t>(i)];
      ux[static_cast<size_t>(i)] = e * ux[static_cast<size_t>(i)] +
                      0.5 * spec.dt * (e * k1.nx[static_cast<size_t>(i)] + k2.nx[static_cast<size_t>(i)]);
      uy[static_cast<size_t>(i)] = e * uy[static_cast<size_t>(i)] +
                      0.5 * spec.dt * (e * k1.ny[static_cast<size_t>(i)] + k2.ny[static_cast<size_t>(i)]);
    }
    sp.project(ux, uy);
    if (step % record_every == 0) {
      sp.inverse(k2.pressure, pressure);
      record();
    }
  }
  return traj;
}

double spectral_divergence_max(const Trajectory& traj, int64_t t) {
  require(traj.spec.family == Family::IncompressibleNs, Err::InvalidAttr,
          "spectral divergence is defined for the spectral solver");
  const int64_t n = traj.dims[2];
  Spectral2D sp(n);
  std::vector<double> u(static_cast<size_t>(n * n)), v(static_cast<size_t>(n * n));
  auto cu = traj.channel(t, 0);
  auto cv = traj.channel(t, 1);
  for (int64_t i = 0; i < n * n; ++i) {
    u[static_cast<size_t>(i)] = cu[static_cast<size_t>(i)];
    v[static_cast<size_t>(i)] = cv[static_cast<size_t>(i)];
  }
  std::vector<cplx> ux, uy, divh(static_cast<size_t>(sp.spectral_size()));
  sp.forward(u, ux);
  sp.forward(v, uy);
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = 0; j < sp.nc(); ++j) {
      const size_t idx = static_cast<size_t>(i * sp.nc() + j);
      divh[idx] = cplx(0.0, sp.kx(j)) * ux[idx] + cplx(0.0, sp.ky(i)) * uy[idx];
    }
  }
  std::vector<double> div;
  sp.inverse(divh, div);
  double mx = 0.0;
  for (double d : div) mx = std::max(mx, std::abs(d));
  return mx;
}

}  // namespace fluidfm::pde
