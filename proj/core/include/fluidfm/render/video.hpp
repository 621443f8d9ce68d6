#pragma once

#include <string>

#include "fluidfm/pde/trajectory.hpp"
#include "fluidfm/render/volume.hpp"

namespace fluidfm::render {

/// Per-camera frame sequences rendered from a ground-truth smoke simulation;
/// the reconstruction input. Frames are grayscale in [0,1].
struct VideoSet {
  std::vector<Camera> cameras;
  int held_out_camera = 0;
  std::vector<std::vector<Frame>> frames;  // [camera][t]
  Box scene_box;
  double extinction = 1.0;  // sigma scale used when rendering ground truth

  int64_t n_frames() const { return frames.empty() ? 0 : int64_t(frames[0].size()); }
  int64_t n_cameras() const { return int64_t(cameras.size()); }

  const Frame& frame(int camera_id, int64_t t) const;

  /// Camera ids that participate in training (everything but the held-out).
  std::vector<int> training_cameras() const;

  /// Directory layout: cam%02d/frames.fldt ([T,1,H,W]) plus rig.json.
  void save(const std::string& dir) const;
  static VideoSet load(const std::string& dir);
};

/// Renders every frame of every camera from the trajectory's density channel
/// with the deterministic midpoint grid path. Raises MissingDensityChannel
/// when the trajectory has no sigma channel.
VideoSet render_video(const pde::Trajectory& trajectory, const std::vector<Camera>& cameras,
                      int held_out_camera, int n_samples = 64, double extinction = 8.0);

}  // namespace fluidfm::render
