#include "fluidfm/render/volume.hpp"

#include <algorithm>
#include <cmath>

#include "fluidfm/util/errors.hpp"

namespace fluidfm::render {

RaySpan intersect_box(const Ray& ray, const Box& box) {
  double t0 = 0.0, t1 = 1e300;
  for (int a = 0; a < 3; ++a) {
    const double o = ray.origin[static_cast<size_t>(a)], d = ray.direction[static_cast<size_t>(a)];
    const double lo = box.lo[static_cast<size_t>(a)], hi = box.hi[static_cast<size_t>(a)];
    if (std::abs(d) < 1e-15) {
      if (o < lo || o > hi) return {};
      continue;
    }
    double ta = (lo - o) / d, tb = (hi - o) / d;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (t0 >= t1) return {};
  RaySpan span;
  span.near = t0;
  span.far = t1;
  span.hit = true;
  return span;
}

std::vector<double> sample_positions(double near, double far, int n_samples, bool midpoint,
                                     const std::vector<double>* jitters,
                                     std::vector<double>* deltas) {
  require(far > near && near >= 0.0, Err::InvalidInterval, "need far > near >= 0");
  require(n_samples >= 2, Err::InvalidInterval, "need at least two samples");
  const double step = (far - near) / double(n_samples);
  std::vector<double> ts(static_cast<size_t>(n_samples));
  for (int i = 0; i < n_samples; ++i) {
    double offset = 0.5;
    if (!midpoint) {
      require(jitters != nullptr && jitters->size() == static_cast<size_t>(n_samples), Err::InvalidAttr,
              "stratified sampling needs one jitter per sample");
      offset = (*jitters)[static_cast<size_t>(i)];
    }
    ts[static_cast<size_t>(i)] = near + (double(i) + offset) * step;
  }
  if (deltas != nullptr) {
    deltas->resize(static_cast<size_t>(n_samples));
    for (int i = 0; i + 1 < n_samples; ++i) {
      (*deltas)[static_cast<size_t>(i)] = ts[static_cast<size_t>(i + 1)] - ts[static_cast<size_t>(i)];
    }
    (*deltas)[static_cast<size_t>(n_samples - 1)] = far - ts[static_cast<size_t>(n_samples - 1)];
    if (midpoint) (*deltas)[static_cast<size_t>(n_samples - 1)] = step;  // uniform segments
  }
  return ts;
}

double render_ray(const DensitySampler& sampler, const Ray& ray, double near, double far,
                  int n_samples, bool midpoint, const std::vector<double>* jitters) {
  std::vector<double> deltas;
  const std::vector<double> ts =
      sample_positions(near, far, n_samples, midpoint, jitters, &deltas);
  double transmittance = 1.0;
  double intensity = 0.0;
  for (int i = 0; i < n_samples; ++i) {
    const Vec3 p = ray.origin + ts[static_cast<size_t>(i)] * ray.direction;
    const double sigma = sampler(p, ray.t);
    require(sigma >= 0.0, Err::NegativeDensity, "density sampler returned a negative value");
    const double alpha = 1.0 - std::exp(-sigma * deltas[static_cast<size_t>(i)]);
    intensity += transmittance * alpha;
    transmittance *= 1.0 - alpha;
  }
  return std::clamp(intensity, 0.0, 1.0);
}

DensitySampler grid_sampler(const std::vector<float>& grid, int64_t d, int64_t h, int64_t w,
                            const Box& box, double extinction) {
  require(grid.size() == static_cast<size_t>(d * h * w), Err::ShapeMismatch, "grid size mismatch");
  const Vec3 lo = box.lo, hi = box.hi;
  return [&grid, d, h, w, lo, hi, extinction](const Vec3& p, double) -> double {
    for (int a = 0; a < 3; ++a) {
      if (p[static_cast<size_t>(a)] < lo[static_cast<size_t>(a)] || p[static_cast<size_t>(a)] > hi[static_cast<size_t>(a)]) return 0.0;
    }
    const double gz = (p[2] - lo[2]) / (hi[2] - lo[2]) * double(d) - 0.5;
    const double gy = (p[1] - lo[1]) / (hi[1] - lo[1]) * double(h) - 0.5;
    const double gx = (p[0] - lo[0]) / (hi[0] - lo[0]) * double(w) - 0.5;
    const double cz = std::clamp(gz, 0.0, double(d - 1));
    const double cy = std::clamp(gy, 0.0, double(h - 1));
    const double cx = std::clamp(gx, 0.0, double(w - 1));
    const int64_t z0 = std::min<int64_t>(int64_t(cz), std::max<int64_t>(d - 2, 0));
    const int64_t y0 = std::min<int64_t>(int64_t(cy), std::max<int64_t>(h - 2, 0));
    const int64_t x0 = std::min<int64_t>(int64_t(cx), std::max<int64_t>(w - 2, 0));
    const double fz = cz - double(z0), fy = cy - double(y0), fx = cx - double(x0);
    const int64_t z1 = std::min(z0 + 1, d - 1), y1 = std::min(y0 + 1, h - 1),
                  x1 = std::min(x0 + 1, w - 1);
    auto at = [&](int64_t zz, int64_t yy, int64_t xx) {
      return double(grid[static_cast<size_t>((zz * h + yy) * w + xx)]);
    };
    const double c00 = at(z0, y0, x0) * (1 - fx) + at(z0, y0, x1) * fx;
    const double c01 = at(z0, y1, x0) * (1 - fx) + at(z0, y1, x1) * fx;
    const double c10 = at(z1, y0, x0) * (1 - fx) + at(z1, y0, x1) * fx;
    const double c11 = at(z1, y1, x0) * (1 - fx) + at(z1, y1, x1) * fx;
    const double v = (c00 * (1 - fy) + c01 * fy) * (1 - fz) + (c10 * (1 - fy) + c11 * fy) * fz;
    return extinction * std::max(v, 0.0);
  };
}

tensor::Tensor composite(const tensor::Tensor& sigmas, const tensor::Tensor& deltas) {
  using namespace tensor;
  require(sigmas.shape() == deltas.shape() && sigmas.rank() == 2, Err::ShapeMismatch,
          "composite expects matching [n_rays, n_samples]");
  Tensor optical = mul(sigmas, deltas);
  Tensor transmittance = exp(neg(cumsum_last(optical, /*exclusive=*/true)));
  Tensor alpha = sub(Tensor::scalar(1.0), exp(neg(optical)));
  Tensor weights = mul(transmittance, alpha);
  return sum(weights, {1});
}

}  // namespace fluidfm::render
