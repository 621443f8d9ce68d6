#pragma once

#include <span>

#include "fluidfm/pde/trajectory.hpp"
#include "fluidfm/util/rng.hpp"

namespace fluidfm::pde {

/// Zero-mean random field with Fourier content limited to wavenumbers <=
/// max_k, normalized to unit max amplitude. The standard initial-condition
/// family for the 2D training corpora.
std::vector<double> band_limited_field(int64_t h, int64_t w, int max_k, Rng& rng);

/// FitzHugh-Nagumo reaction-diffusion. init is [2,H,W] (activator, inhibitor)
/// or empty for the seeded band-limited default. Records every
/// `record_every`-th state, always including state 0; steps must be a
/// multiple of record_every.
Trajectory simulate_reaction_diffusion(const PdeSpec& spec, std::span<const double> init,
                                       int64_t steps, int64_t record_every = 1);

struct InsDiagnostics {
  std::vector<double> max_divergence;  // spectral, post-projection, per recorded frame
  std::vector<double> max_speed;
};

/// Pseudo-spectral incompressible Navier-Stokes on the periodic torus:
/// dealiased advection, exact viscous integrating factor, Leray projection
/// every step. init_velocity is [2,H,W] or empty (random streamfunction).
/// Channels: (vx, vy, p). Diagnostics are measured on the solver state in
/// full precision (stored frames are 32-bit).
Trajectory simulate_incompressible_ns(const PdeSpec& spec,
                                      std::span<const double> init_velocity, int64_t steps,
                                      int64_t record_every = 1,
                                      InsDiagnostics* diagnostics = nullptr);

/// Max over the grid of the spectral divergence of frame t's velocity.
double spectral_divergence_max(const Trajectory& traj, int64_t t);

/// Compressible Navier-Stokes, conservative finite volumes (local
/// Lax-Friedrichs, minmod-limited second order, SSP-RK2), central-differenced
/// viscous terms. init is primitive [4,H,W] = (vx, vy, p, rho) or empty.
/// mass_history, when given, collects sum(rho)*dx^2 in full precision per
/// recorded frame.
Trajectory simulate_compressible_ns(const PdeSpec& spec, std::span<const double> init,
                                    int64_t steps, int64_t record_every = 1,
                                    std::vector<double>* mass_history = nullptr);

/// Radial dam break shallow-water; conservative Lax-Friedrichs on (h,hu,hv).
/// Stores only the height channel. mass_history as above (sum(h)*dx^2).
Trajectory simulate_shallow_water(const PdeSpec& spec, int64_t steps,
                                  int64_t record_every = 1,
                                  std::vector<double>* mass_history = nullptr);

/// Sum of the conserved density channel times cell area at frame t
/// (h for shallow water, rho for compressible NS).
double total_mass(const Trajectory& traj, int64_t t);

struct SmokeDiagnostics {
  std::vector<double> max_divergence;  // post-projection, per recorded frame
  std::vector<double> max_speed;       // per recorded frame
};

/// 3D buoyant smoke on a MAC grid: semi-Lagrangian advection, Boussinesq
/// buoyancy, CG pressure projection, reflective walls, saturating source disk
/// at the bottom inlet. Channels: (sigma, vx, vy, vz), cell-centered.
Trajectory simulate_buoyant_smoke(const PdeSpec& spec, int64_t steps,
                                  int64_t record_every = 1,
                                  SmokeDiagnostics* diagnostics = nullptr);

}  // namespace fluidfm::pde
