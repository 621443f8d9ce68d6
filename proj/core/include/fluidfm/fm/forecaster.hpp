#pragma once

#include <string>
#include <vector>

#include "fluidfm/pde/corpus.hpp"
#include "fluidfm/provenance.hpp"
#include "fluidfm/tensor/ops.hpp"

namespace fluidfm::fm {

/// Architecture of the windowed-attention forecaster. Desk defaults: 64x64
/// inputs, patch (2,4,4) -> token grid (5,16,16), window (5,4,4), 6 blocks,
/// embed 96, 4 heads. Paper-scale values (18 blocks, window (8,7,7), 224x224)
/// remain expressible.
struct ForecasterConfig {
  int64_t t_in = 10;
  int64_t in_channels = 4;
  int64_t patch_t = 2, patch_h = 4, patch_w = 4;
  int64_t embed_dim = 96;
  int64_t n_blocks = 6;
  int64_t n_heads = 4;
  int64_t window_t = 5, window_h = 4, window_w = 4;
  int64_t mlp_ratio = 4;
  int64_t input_h = 64, input_w = 64;

  int64_t tokens_t() const { return t_in / patch_t; }
  int64_t tokens_h() const { return input_h / patch_h; }
  int64_t tokens_w() const { return input_w / patch_w; }
  int64_t n_tokens() const { return tokens_t() * tokens_h() * tokens_w(); }
  // windows never exceed the token grid
  int64_t eff_window_t() const { return std::min(window_t, tokens_t()); }
  int64_t eff_window_h() const { return std::min(window_h, tokens_h()); }
  int64_t eff_window_w() const { return std::min(window_w, tokens_w()); }
  int64_t window_volume() const {
    return eff_window_t() * eff_window_h() * eff_window_w();
  }
  int64_t rel_bias_size() const {
    return (2 * eff_window_t() - 1) * (2 * eff_window_h() - 1) * (2 * eff_window_w() - 1);
  }

  /// Pixel-space center of feature-grid token (a, b) and its inverse; the
  /// affine map between image and token coordinates.
  double token_center_row(int64_t a) const { return (double(a) + 0.5) * double(patch_h); }
  double token_center_col(int64_t b) const { return (double(b) + 0.5) * double(patch_w); }
  double feature_grid_row(double pixel_row) const {
    return pixel_row / double(patch_h) - 0.5;
  }
  double feature_grid_col(double pixel_col) const {
    return pixel_col / double(patch_w) - 0.5;
  }

  void validate() const;
  /// Closed-form parameter count; asserted against the actual parameter
  /// vector to guard silent architecture drift.
  int64_t param_count() const;

  std::string to_json() const;
  static ForecasterConfig from_json(const std::string& text);
};

/// All learnable parameters plus normalization statistics and training
/// provenance. Parameters are gradient leaves in declaration order (the
/// checkpoint layout).
struct ForecasterWeights {
  ForecasterConfig config;
  std::vector<tensor::Tensor> params;
  pde::NormStats stats;
  bool has_stats = false;
  TrainingManifest manifest;
  int64_t trained_epochs = 0;

  static ForecasterWeights init(const ForecasterConfig& config, uint64_t seed);

  int64_t param_count() const;

  // named access (indices fixed by the declaration order)
  enum Fixed { kTokenizerKernel = 0, kTokenizerBias = 1, kPosEmbed = 2, kBlockBase = 3 };
  static constexpr int64_t kPerBlock = 13;
  tensor::Tensor& block_param(int64_t block, int64_t which);
  const tensor::Tensor& block_param(int64_t block, int64_t which) const;
  int64_t final_ln_index() const { return kBlockBase + config.n_blocks * kPerBlock; }

  /// FMCK checkpoint: magic, version, metadata, flat f32 parameters.
  void save(const std::string& path) const;
  static ForecasterWeights load(const std::string& path);
};

/// One forecasting step in normalized space: frames [T_in, C, H, W] ->
/// next frame [C, H, W]. Differentiable when a tape is active.
tensor::Tensor forward(const ForecasterWeights& weights, const tensor::Tensor& frames);

/// Autoregressive rollout in normalized space; the window slides by one per
/// predicted step. Returns [n_steps, C, H, W].
tensor::Tensor rollout(const ForecasterWeights& weights, const tensor::Tensor& seed_frames,
                       int64_t n_steps);

/// Temporal interpolation of t >= 2 frames onto T_in uniform samples of the
/// same range; endpoints are preserved bit-exactly.
tensor::Tensor pad_to_input(const tensor::Tensor& frames, int64_t t_in);

/// Number of pad_to_input invocations so far (test instrumentation).
int64_t pad_to_input_invocations();

/// Final-block features of the last temporal token slice as a spatial grid
/// [H_tok, W_tok, embed_dim].
tensor::Tensor extract_feature_map(const ForecasterWeights& weights,
                                   const tensor::Tensor& frames);

}  // namespace fluidfm::fm
