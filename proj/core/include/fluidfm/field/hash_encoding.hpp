#pragma once

#include <string>
#include <vector>

#include "fluidfm/tensor/ops.hpp"
#include "fluidfm/util/rng.hpp"

namespace fluidfm::field {

/// Multiscale 4D (x,y,z,t) hash-grid encoding. Levels whose dense corner
/// lattice fits in the table are indexed directly; finer levels hash with the
/// fixed large-prime multipliers.
struct HashEncodingConfig {
  int64_t n_levels = 8;
  int64_t features_per_level = 2;
  int64_t table_size_log2 = 15;
  int64_t base_resolution = 8;
  double growth = 1.5;

  int64_t table_size() const { return int64_t(1) << table_size_log2; }
  int64_t level_resolution(int64_t level) const;
  int64_t feature_dim() const { return n_levels * features_per_level; }
  void validate() const;

  std::string to_json() const;
  static HashEncodingConfig from_json(const std::string& text);
};

/// Fresh table parameters (one leaf tensor per level, [table_size, F]),
/// uniform in [-1e-4, 1e-4] as is conventional for hash grids.
std::vector<tensor::Tensor> init_hash_tables(const HashEncodingConfig& config, Rng& rng);

/// Quadrilinear hash-grid lookup: points [N,4] in normalized [0,1]^4
/// (clamped otherwise) -> features [N, L*F]. Gradients flow to the tables;
/// table updates accumulate in point order so training is bit-reproducible.
tensor::Tensor hash_encode(const HashEncodingConfig& config,
                           std::span<const tensor::Tensor> tables,
                           const tensor::Tensor& points);

/// Derivative of hash_encode w.r.t. one normalized coordinate axis (0..3),
/// itself differentiable w.r.t. the tables (the quadrilinear weights are
/// linear in the table entries).
tensor::Tensor hash_encode_dcoord(const HashEncodingConfig& config,
                                  std::span<const tensor::Tensor> tables,
                                  const tensor::Tensor& points, int axis);

}  // namespace fluidfm::field
