#include "fluidfm/field/hash_encoding.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "fluidfm/util/errors.hpp"

namespace fluidfm::field {

using namespace fluidfm::tensor;
using nlohmann::json;

int64_t HashEncodingConfig::level_resolution(int64_t level) const {
  return int64_t(std::floor(double(base_resolution) * std::pow(growth, double(level))));
}

void HashEncodingConfig::validate() const {
  require(n_levels >= 1 && features_per_level >= 1, Err::InvalidAttr,
          "encoding extents must be positive");
  require(table_size_log2 >= 4 && table_size_log2 <= 24, Err::InvalidAttr,
          "table size must be a reasonable power of two");
  require(growth > 1.0, Err::InvalidAttr, "level resolutions must strictly increase");
  for (int64_t l = 1; l < n_levels; ++l) {
    require(level_resolution(l) > level_resolution(l - 1), Err::InvalidAttr,
            "level resolutions must strictly increase");
  }
}

std::string HashEncodingConfig::to_json() const {
  json j;
  j["n_levels"] = n_levels;
  j["features_per_level"] = features_per_level;
  j["table_size_log2"] = table_size_log2;
  j["base_resolution"] = base_resolution;
  j["growth"] = growth;
  return j.dump();
}

HashEncodingConfig HashEncodingConfig::from_json(const std::string& text) {
  const json j = json::parse(text);
  HashEncodingConfig c;
  c.n_levels = j.at("n_levels").get<int64_t>();
  c.features_per_level = j.at("features_per_level").get<int64_t>();
  c.table_size_log2 = j.at("table_size_log2").get<int64_t>();
  c.base_resolution = j.at("base_resolution").get<int64_t>();
  c.growth = j.at("growth").get<double>();
  return c;
}

std::vector<Tensor> init_hash_tables(const HashEncodingConfig& config, Rng& rng) {
  config.validate();
  std::vector<Tensor> tables;
  tables.reserve(static_cast<size_t>(config.n_levels));
  for (int64_t l = 0; l < config.n_levels; ++l) {
    Rng stream = rng.split("hash_level_" + std::to_string(l));
    std::vector<double> data(static_cast<size_t>(config.table_size() * config.features_per_level));
    for (double& v : data) v = stream.uniform(-1e-4, 1e-4);
    tables.push_back(
        Tensor::from_data({config.table_size(), config.features_per_level}, std::move(data))
            .with_grad());
  }
  return tables;
}

namespace {

constexpr uint64_t kPrimes[4] = {1ULL, 2654435761ULL, 805459861ULL, 3674653429ULL};

struct CornerRef {
  int64_t index;    // row in the level table
  double weight;    // quadrilinear weight (or its coordinate derivative)
};

/// Per-level cell lookup shared by the value and derivative ops.
/// daxis < 0 computes values; otherwise the derivative of the weight w.r.t.
/// the scaled coordinate of that axis (the caller multiplies by the level
/// resolution to express it per normalized coordinate).
void corner_refs(int64_t res, int64_t table_size, bool direct, const double* pn,
                 int daxis, CornerRef out[16]) {
  int64_t cell[4];
  double frac[4];
  // outside the box the encoding is clamped, so its coordinate derivative
  // vanishes there
  const bool clamped_daxis =
      daxis >= 0 && (pn[daxis] < 0.0 || pn[daxis] > 1.0);
  for (int a = 0; a < 4; ++a) {
    const double scaled = std::clamp(pn[a], 0.0, 1.0) * double(res);
    int64_t c = int64_t(scaled);
    if (c > res - 1) c = res - 1;
    cell[a] = c;
    frac[a] = scaled - double(c);
  }
  const int64_t stride = res + 1;
  for (int corner = 0; corner < 16; ++corner) {
    double weight = 1.0;
    int64_t direct_index = 0;
    uint64_t hash = 0;
    for (int a = 0; a < 4; ++a) {
      const int bit = (corner >> a) & 1;
      const double f = frac[a];
      if (a == daxis) {
        weight *= bit != 0 ? 1.0 : -1.0;
      } else {
        weight *= bit != 0 ? f : 1.0 - f;
      }
      const uint64_t coord = uint64_t(cell[a] + bit);
      if (direct) {
        direct_index = direct_index * stride + int64_t(coord);
      } else {
        hash ^= coord * kPrimes[a];
      }
    }
    out[corner].index =
        direct ? direct_index : int64_t(hash & uint64_t(table_size - 1));
    out[corner].weight = clamped_daxis ? 0.0 : weight;
  }
}

Tensor encode_impl(const HashEncodingConfig& config, std::span<const Tensor> tables,
                   const Tensor& points, int daxis) {
  config.validate();
  require(int64_t(tables.size()) == config.n_levels, Err::InvalidAttr,
          "one table per level expected");
  require(points.rank() == 2 && points.dim(1) == 4, Err::ShapeMismatch,
          "points must be [N,4]");
  const int64_t n = points.dim(0);
  const int64_t f = config.features_per_level;
  const int64_t out_dim = config.feature_dim();
  const auto& pv = points.data();

  std::vector<double> out(static_cast<size_t>(n * out_dim), 0.0);
  for (int64_t l = 0; l < config.n_levels; ++l) {
    const int64_t res = config.level_resolution(l);
    const bool direct =
        (res + 1) * (res + 1) * (res + 1) * (res + 1) <= config.table_size();
    const double scale = daxis >= 0 ? double(res) : 1.0;
    const auto& tv = tables[static_cast<size_t>(l)].data();
    for (int64_t i = 0; i < n; ++i) {
      CornerRef refs[16];
      corner_refs(res, config.table_size(), direct, &pv[static_cast<size_t>(4 * i)], daxis, refs);
      double* dst = out.data() + i * out_dim + l * f;
      for (const CornerRef& r : refs) {
        const double w = r.weight * scale;
        const double* row = tv.data() + r.index * f;
        for (int64_t k = 0; k < f; ++k) dst[k] += w * row[k];
      }
    }
  }

  // backward: scatter-add into each level's table, accumulated in point order
  std::vector<Tensor> inputs(tables.begin(), tables.end());
  inputs.push_back(points);
  Tensor pts_saved = points;
  return emit_custom(
      {n, out_dim}, std::move(out), inputs,
      [config, pts_saved, n, f, out_dim, daxis](const Tensor& g) -> std::vector<Tensor> {
        const auto& gv = g.data();
        const auto& pv = pts_saved.data();
        std::vector<Tensor> grads;
        grads.reserve(static_cast<size_t>(config.n_levels) + 1);
        for (int64_t l = 0; l < config.n_levels; ++l) {
          const int64_t res = config.level_resolution(l);
          const bool direct =
              (res + 1) * (res + 1) * (res + 1) * (res + 1) <= config.table_size();
          const double scale = daxis >= 0 ? double(res) : 1.0;
          std::vector<double> gt(static_cast<size_t>(config.table_size() * f), 0.0);
          for (int64_t i = 0; i < n; ++i) {
            CornerRef refs[16];
            corner_refs(res, config.table_size(), direct, &pv[static_cast<size_t>(4 * i)], daxis, refs);
            const double* gsrc = gv.data() + i * out_dim + l * f;
            for (const CornerRef& r : refs) {
              const double w = r.weight * scale;
              double* row = gt.data() + r.index * f;
              for (int64_t k = 0; k < f; ++k) row[k] += w * gsrc[k];
            }
          }
          grads.push_back(make_tensor({config.table_size(), f}, std::move(gt)));
        }
        grads.push_back(Tensor());  // coordinate gradients ride the dcoord ops
        return grads;
      });
}

}  // namespace

Tensor hash_encode(const HashEncodingConfig& config, std::span<const Tensor> tables,
                   const Tensor& points) {
  return encode_impl(config, tables, points, -1);
}

Tensor hash_encode_dcoord(const HashEncodingConfig& config, std::span<const Tensor> tables,
                          const Tensor& points, int axis) {
  require(axis >= 0 && axis < 4, Err::InvalidAttr, "axis must be 0..3");
  return encode_impl(config, tables, points, axis);
}

}  // namespace fluidfm::field
