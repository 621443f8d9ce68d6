#pragma once

#include <span>
#include <string>
#include <vector>

#include "fluidfm/pde/pde_spec.hpp"

namespace fluidfm::pde {

/// A simulated solution sampled on a regular space-time grid. Values are
/// stored as the file format stores them: 32-bit floats in [T,C,H,W] or
/// [T,C,D,H,W] row-major order.
struct Trajectory {
  PdeSpec spec;
  std::vector<int64_t> dims;  // [T,C,H,W] or [T,C,D,H,W]
  std::vector<float> values;
  std::vector<std::string> channel_names;
  double dt = 0.0;  // physical interval between stored frames
  double dx = 0.0;

  int64_t frames() const { return dims.empty() ? 0 : dims[0]; }
  int64_t channels() const { return dims.size() > 1 ? dims[1] : 0; }
  int64_t spatial_size() const;
  int64_t frame_size() const { return channels() * spatial_size(); }

  std::span<const float> frame(int64_t t) const;
  std::span<const float> channel(int64_t t, int64_t c) const;

  bool all_finite() const;

  /// FLDT container: magic, version, length-prefixed metadata, f32 payload.
  void save(const std::string& path) const;
  static Trajectory load(const std::string& path);
};

/// Bilinear resampling of one [H,W] plane onto [H2,W2] (pixel-center aligned).
void resize_bilinear(std::span<const float> src, int64_t h, int64_t w,
                     std::span<float> dst, int64_t h2, int64_t w2);

}  // namespace fluidfm::pde
