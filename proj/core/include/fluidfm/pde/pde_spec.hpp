#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace fluidfm::pde {

enum class Family {
  ReactionDiffusion,
  IncompressibleNs,
  CompressibleNs,
  ShallowWater,
  BuoyantSmoke,
};

enum class Boundary { Periodic, Reflective };

const char* family_name(Family f);
Family family_from_name(const std::string& name);

/// A simulation recipe: family, domain box, grid, time step, parameters and
/// seed. Construction validates parameter ranges and the family's CFL bound
/// with a 0.4 safety factor where it is known a priori; velocity-dependent
/// bounds are re-checked every step by the solvers.
struct PdeSpec {
  Family family = Family::ReactionDiffusion;
  std::array<double, 3> domain_min{0.0, 0.0, 0.0};
  std::array<double, 3> domain_max{1.0, 1.0, 1.0};
  std::vector<int64_t> grid;  // (H, W) for 2D families, (D, H, W) for smoke
  double dt = 0.0;
  std::map<std::string, double> params;
  Boundary boundary = Boundary::Periodic;
  uint64_t seed = 0;

  double param(const std::string& key) const;
  double param_or(const std::string& key, double def) const;

  /// Uniform grid spacing along the last axis.
  double dx() const;

  void validate() const;

  // Factory defaults carry the appendix-level physical parameters; dt defaults
  // respect the 0.4 CFL safety factor.
  static PdeSpec reaction_diffusion(int64_t n, uint64_t seed);
  static PdeSpec incompressible_ns(int64_t n, uint64_t seed);
  static PdeSpec compressible_ns(int64_t n, uint64_t seed, double mach = 1.0);
  static PdeSpec shallow_water(int64_t n, uint64_t seed);
  static PdeSpec buoyant_smoke(int64_t n, uint64_t seed);
};

/// Stability-bound dt for the family (before the 0.4 safety factor), using
/// construction-time information only.
double cfl_dt_bound(const PdeSpec& spec);

}  // namespace fluidfm::pde
