#include "fluidfm/pde/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "fluidfm/util/fldt.hpp"
#include "fluidfm/util/errors.hpp"

namespace fluidfm::pde {

using nlohmann::json;

int64_t Trajectory::spatial_size() const {
  int64_t n = 1;
  for (size_t i = 2; i < dims.size(); ++i) n *= dims[i];
  return n;
}

std::span<const float> Trajectory::frame(int64_t t) const {
  const int64_t fs = frame_size();
  return {values.data() + t * fs, static_cast<size_t>(fs)};
}

std::span<const float> Trajectory::channel(int64_t t, int64_t c) const {
  const int64_t ss = spatial_size();
  return {values.data() + t * frame_size() + c * ss, static_cast<size_t>(ss)};
}

bool Trajectory::all_finite() const {
  return std::all_of(values.begin(), values.end(),
                     [](float v) { return std::isfinite(v); });
}

void Trajectory::save(const std::string& path) const {
  json meta;
  meta["kind"] = "trajectory";
  meta["family"] = family_name(spec.family);
  meta["params"] = spec.params;
  meta["grid"] = spec.grid;
  meta["domain_min"] = spec.domain_min;
  meta["domain_max"] = spec.domain_max;
  meta["boundary"] = spec.boundary == Boundary::Periodic ? "periodic" : "reflective";
  meta["seed"] = spec.seed;
  meta["spec_dt"] = spec.dt;
  meta["dt"] = dt;
  meta["dx"] = dx;
  meta["channel_names"] = channel_names;
  fldt::write(path, dims, values, meta.dump());
}

Trajectory Trajectory::load(const std::string& path) {
  fldt::Payload payload = fldt::read(path);
  const json meta = json::parse(payload.metadata_json);
  require(meta.value("kind", "trajectory") == "trajectory", Err::IoError,
          "not a trajectory file: " + path);

  Trajectory t;
  t.spec.family = family_from_name(meta.at("family").get<std::string>());
  t.spec.params = meta.at("params").get<std::map<std::string, double>>();
  t.spec.grid = meta.at("grid").get<std::vector<int64_t>>();
  t.spec.domain_min = meta.at("domain_min").get<std::array<double, 3>>();
  t.spec.domain_max = meta.at("domain_max").get<std::array<double, 3>>();
  t.spec.boundary = meta.at("boundary").get<std::string>() == "periodic"
                        ? Boundary::Periodic
                        : Boundary::Reflective;
  t.spec.seed = meta.at("seed").get<uint64_t>();
  t.spec.dt = meta.at("spec_dt").get<double>();
  t.dims = std::move(payload.dims);
  t.dt = meta.at("dt").get<double>();
  t.dx = meta.at("dx").get<double>();
  t.channel_names = meta.at("channel_names").get<std::vector<std::string>>();
  t.values = std::move(payload.values);
  return t;
}

void resize_bilinear(std::span<const float> src, int64_t h, int64_t w, std::span<float> dst,
                     int64_t h2, int64_t w2) {
  require(src.size() == static_cast<size_t>(h * w) && dst.size() == static_cast<size_t>(h2 * w2), Err::ResolutionMismatch,
          "resize buffer sizes");
  require(h2 > 0 && w2 > 0, Err::ResolutionMismatch, "non-positive target resolution");
  const double sy = double(h) / double(h2);
  const double sx = double(w) / double(w2);
  for (int64_t i = 0; i < h2; ++i) {
    double fy = (double(i) + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, double(h - 1));
    const int64_t y0 = std::min<int64_t>(int64_t(fy), std::max<int64_t>(h - 2, 0));
    const double wy = fy - double(y0);
    const int64_t y1 = std::min(y0 + 1, h - 1);
    for (int64_t j = 0; j < w2; ++j) {
      double fx = (double(j) + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, double(w - 1));
      const int64_t x0 = std::min<int64_t>(int64_t(fx), std::max<int64_t>(w - 2, 0));
      const double wx = fx - double(x0);
      const int64_t x1 = std::min(x0 + 1, w - 1);
      const double v = (1 - wy) * ((1 - wx) * src[static_cast<size_t>(y0 * w + x0)] +
                                   wx * src[static_cast<size_t>(y0 * w + x1)]) +
                       wy * ((1 - wx) * src[static_cast<size_t>(y1 * w + x0)] +
                             wx * src[static_cast<size_t>(y1 * w + x1)]);
      dst[static_cast<size_t>(i * w2 + j)] = float(v);
    }
  }
}

}  // namespace fluidfm::pde
