#pragma once

#include <array>
#include <string>
#include <vector>

#include "fluidfm/pde/trajectory.hpp"
#include "fluidfm/util/rng.hpp"

namespace fluidfm::pde {

inline constexpr int64_t kMaxChannels = 4;

/// Per-channel z-score statistics, computed over native (un-padded) entries
/// of the training split. Channels with no native data keep mean 0, std 1.
struct NormStats {
  std::array<double, kMaxChannels> mean{0.0, 0.0, 0.0, 0.0};
  std::array<double, kMaxChannels> stdev{1.0, 1.0, 1.0, 1.0};
};

struct CorpusWindow {
  int32_t trajectory = 0;
  int32_t t0 = 0;
};

struct CorpusBuildConfig {
  int64_t per_family = 50;
  int64_t resolution = 64;  // windows are bilinearly matched to this
  int64_t native_grid = 64;
  int64_t t_in = 10;
  int64_t frames_per_trajectory = 21;
  double val_fraction = 0.1;
  uint64_t seed = 0;
};

/// The multiphysics pretraining set: trajectories from every 2D family,
/// matched to one spatial resolution, with channel-padding to kMaxChannels
/// and z-score statistics. Windows pair T_in input frames with the next
/// frame. Sampling is uniform over families per draw.
class Corpus {
 public:
  std::vector<Trajectory> trajectories;
  std::vector<Family> family_of;               // per trajectory
  std::vector<bool> is_validation;             // per trajectory
  std::vector<Family> families;                // distinct, in build order
  NormStats stats;
  int64_t t_in = 10;
  int64_t resolution = 64;
  CorpusBuildConfig build_config;

  int64_t height() const { return resolution; }
  int64_t width() const { return resolution; }

  std::vector<CorpusWindow> train_windows(Family f) const;
  std::vector<CorpusWindow> validation_windows(Family f) const;

  /// Uniform family draw, then uniform window within the family.
  CorpusWindow sample_train(Rng& rng) const;
  Family window_family(const CorpusWindow& w) const;
  int64_t native_channels(const CorpusWindow& w) const;

  /// Assembles the normalized zero-padded pair: input [T_in, 4, H, W] and
  /// target [4, H, W], row-major doubles.
  void window_data(const CorpusWindow& w, std::vector<double>& input,
                   std::vector<double>& target) const;

  /// Undo normalization for channel c.
  double denormalize(double v, int64_t c) const {
    return v * stats.stdev[size_t(c)] + stats.mean[size_t(c)];
  }
  double normalize(double v, int64_t c) const {
    return (v - stats.mean[size_t(c)]) / stats.stdev[size_t(c)];
  }

  void save(const std::string& dir) const;
  static Corpus load(const std::string& dir);
};

int64_t family_native_channels(Family f);

/// Simulates per_family trajectories for each listed family and assembles the
/// corpus. Requires all four 2D families; raises EmptyFamily otherwise.
Corpus build_pretraining_corpus(const std::vector<Family>& families,
                                const CorpusBuildConfig& config);

}  // namespace fluidfm::pde
