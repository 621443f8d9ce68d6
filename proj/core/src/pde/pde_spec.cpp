#include "fluidfm/pde/pde_spec.hpp"

#include <algorithm>
#include <cmath>

#include "fluidfm/util/errors.hpp"

namespace fluidfm::pde {

const char* family_name(Family f) {
  switch (f) {
    case Family::ReactionDiffusion: return "reaction_diffusion";
    case Family::IncompressibleNs: return "incompressible_ns";
    case Family::CompressibleNs: return "compressible_ns";
    case Family::ShallowWater: return "shallow_water";
    case Family::BuoyantSmoke: return "buoyant_smoke";
  }
  return "?";
}

Family family_from_name(const std::string& name) {
  if (name == "reaction_diffusion") return Family::ReactionDiffusion;
  if (name == "incompressible_ns") return Family::IncompressibleNs;
  if (name == "compressible_ns") return Family::CompressibleNs;
  if (name == "shallow_water") return Family::ShallowWater;
  if (name == "buoyant_smoke") return Family::BuoyantSmoke;
  raise(Err::ConfigError, "unknown PDE family: " + name);
}

double PdeSpec::param(const std::string& key) const {
  auto it = params.find(key);
  require(it != params.end(), Err::InvalidAttr,
          std::string(family_name(family)) + " missing parameter " + key);
  return it->second;
}

double PdeSpec::param_or(const std::string& key, double def) const {
  auto it = params.find(key);
  return it == params.end() ? def : it->second;
}

double PdeSpec::dx() const {
  require(!grid.empty(), Err::InvalidAttr, "spec has no grid");
  const int axis = static_cast<int>(grid.size()) - 1;
  const double extent = domain_max[static_cast<size_t>(axis == 2 ? 0 : axis)] -
                        domain_min[static_cast<size_t>(axis == 2 ? 0 : axis)];
  // uniform spacing: extents are isotropic per construction below
  return extent / double(grid.back());
}

double cfl_dt_bound(const PdeSpec& spec) {
  const double h = spec.dx();
  switch (spec.family) {
    case Family::ReactionDiffusion: {
      const double d = std::max(spec.param("D_u"), spec.param("D_v"));
      return d > 0 ? h * h / (4.0 * d) : 1e300;
    }
    case Family::IncompressibleNs: {
      // advective bound with the unit-normalized initial velocity
      return h / 1.0;
    }
    case Family::CompressibleNs: {
      const double gamma = spec.param_or("Gamma", 5.0 / 3.0);
      const double cs = std::sqrt(gamma);  // background rho = p = 1
      const double m = spec.param_or("M", 1.0);
      return h / ((1.0 + m) * cs);
    }
    case Family::ShallowWater: {
      const double g = spec.param_or("g", 1.0);
      const double h0 = spec.param_or("h0", 2.0);
      return h / std::sqrt(g * h0);
    }
    case Family::BuoyantSmoke:
      // semi-Lagrangian advection is unconditionally stable; the solvers
      // enforce a displacement bound at runtime instead
      return 1e300;
  }
  return 1e300;
}

void PdeSpec::validate() const {
  require(dt > 0.0, Err::InvalidAttr, "dt must be positive");
  const bool smoke = family == Family::BuoyantSmoke;
  require(grid.size() == (smoke ? 3u : 2u), Err::InvalidAttr, "grid rank mismatch");
  for (int64_t g : grid) require(g >= 4, Err::InvalidAttr, "grid too small");

  switch (family) {
    case Family::ReactionDiffusion:
      require(param("D_u") >= 0 && param("D_v") >= 0, Err::InvalidAttr,
              "diffusion coefficients must be nonnegative");
      break;
    case Family::IncompressibleNs:
      require(param("nu") >= 0, Err::InvalidAttr, "viscosity must be nonnegative");
      require(boundary == Boundary::Periodic, Err::InvalidAttr,
              "spectral solver requires periodic boundary");
      break;
    case Family::CompressibleNs:
      require(param_or("nu", 0.01) >= 0 && param_or("zeta", 0.01) >= 0, Err::InvalidAttr,
              "viscosities must be nonnegative");
      break;
    case Family::ShallowWater: {
      const double h0 = param_or("h0", 2.0), h1 = param_or("h1", 1.0);
      require(h0 >= h1 && h1 > 0, Err::InvalidAttr, "requires h0 >= h1 > 0");
      const double r = param_or("r", 0.5);
      const double half = 0.5 * (domain_max[0] - domain_min[0]);
      require(r > 0 && r < half, Err::InvalidAttr, "dam radius outside (0, half-extent)");
      break;
    }
    case Family::BuoyantSmoke:
      require(param_or("beta", 0.0) >= 0 && param_or("s", 0.0) >= 0, Err::InvalidAttr,
              "buoyancy and source rate must be nonnegative");
      break;
  }

  const double bound = cfl_dt_bound(*this);
  require(dt <= 0.4 * bound, Err::CflViolation,
          std::string(family_name(family)) + ": dt " + std::to_string(dt) +
              " exceeds 0.4 * stability bound " + std::to_string(bound));
}

PdeSpec PdeSpec::reaction_diffusion(int64_t n, uint64_t seed) {
  PdeSpec s;
  s.family = Family::ReactionDiffusion;
  s.domain_min = {-1.0, -1.0, 0.0};
  s.domain_max = {1.0, 1.0, 0.0};
  s.grid = {n, n};
  s.params = {{"D_u", 5e-3}, {"D_v", 1e-3}, {"k", 5e-3}};
  s.boundary = Boundary::Periodic;
  s.seed = seed;
  s.dt = 0.25 * s.dx() * s.dx() / (4.0 * 5e-3);
  return s;
}

PdeSpec PdeSpec::incompressible_ns(int64_t n, uint64_t seed) {
  PdeSpec s;
  s.family = Family::IncompressibleNs;
  s.domain_min = {0.0, 0.0, 0.0};
  s.domain_max = {2.0 * M_PI, 2.0 * M_PI, 0.0};
  s.grid = {n, n};
  s.params = {{"nu", 0.01}, {"rho", 1.0}};
  s.boundary = Boundary::Periodic;
  s.seed = seed;
  s.dt = 0.2 * s.dx();
  return s;
}

PdeSpec PdeSpec::compressible_ns(int64_t n, uint64_t seed, double mach) {
  PdeSpec s;
  s.family = Family::CompressibleNs;
  s.domain_min = {0.0, 0.0, 0.0};
  s.domain_max = {1.0, 1.0, 0.0};
  s.grid = {n, n};
  // nu, zeta default to the incompressible value; Gamma = 5/3
  s.params = {{"nu", 0.01}, {"zeta", 0.01}, {"Gamma", 5.0 / 3.0}, {"M", mach}};
  s.boundary = Boundary::Periodic;
  s.seed = seed;
  s.dt = 0.3 * cfl_dt_bound(s);
  return s;
}

PdeSpec PdeSpec::shallow_water(int64_t n, uint64_t seed) {
  PdeSpec s;
  s.family = Family::ShallowWater;
  s.domain_min = {-2.5, -2.5, 0.0};
  s.domain_max = {2.5, 2.5, 0.0};
  s.grid = {n, n};
  s.params = {{"g", 1.0}, {"h0", 2.0}, {"h1", 1.0}, {"r", 0.5}};
  s.boundary = Boundary::Reflective;
  s.seed = seed;
  s.dt = 0.3 * cfl_dt_bound(s);
  return s;
}

PdeSpec PdeSpec::buoyant_smoke(int64_t n, uint64_t seed) {
  PdeSpec s;
  s.family = Family::BuoyantSmoke;
  s.domain_min = {0.0, 0.0, 0.0};
  s.domain_max = {1.0, 1.0, 1.0};
  s.grid = {n, n, n};
  s.params = {{"beta", 0.12}, {"s", 0.8}, {"inlet_radius", 0.15}, {"dt", 0.0}};
  s.boundary = Boundary::Reflective;
  s.seed = seed;
  s.dt = 0.25;
  return s;
}

}  // namespace fluidfm::pde
