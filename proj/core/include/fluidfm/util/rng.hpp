#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace fluidfm {

/// splitmix64 step; also the mixing function behind seed fan-out.
uint64_t splitmix64(uint64_t& state);

/// Derives a named sub-seed from a master seed. Used to isolate
/// nondeterminism sources (data, init, sampling, ...) from one master seed.
uint64_t derive_seed(uint64_t master, std::string_view name);

/// Deterministic generator (xoshiro256++ seeded via splitmix64).
/// Identical seeds yield identical streams on every platform; no libstdc++
/// distribution objects are involved.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  /// Uniform in [lo, hi).
  double uniform(double lo, double hi);
  /// Uniform integer in [0, n). Requires n > 0.
  int64_t uniform_int(int64_t n);
  /// Standard normal via Box-Muller.
  double normal();
  /// Fills with i.i.d. N(0, sigma^2).
  void fill_normal(std::vector<double>& out, double sigma);

  /// Child stream independent of this one.
  Rng split(std::string_view name);

 private:
  uint64_t s_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
  uint64_t seed_;
};

}  // namespace fluidfm
