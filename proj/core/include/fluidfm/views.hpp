#pragma once

#include <string>

#include "fluidfm/render/camera.hpp"

namespace fluidfm {

/// A model-generated frame admitted into a training set by the PSNR gate.
/// Its time index always lies strictly beyond the real training range.
struct AugmentedView {
  render::Frame frame;
  int camera_id = 0;
  int64_t time_index = 0;
  std::string source = "foundation_model";  // or "fluid_field"
  double reliability = 0.0;                 // calibration PSNR (dB)
  int round = 0;
};

}  // namespace fluidfm
