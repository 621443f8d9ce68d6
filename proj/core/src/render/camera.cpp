#include "fluidfm/render/camera.hpp"

#include <cmath>

#include "fluidfm/util/errors.hpp"

namespace fluidfm::render {

double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

Vec3 normalized(const Vec3& a) {
  const double n = norm(a);
  require(n > 0.0, Err::InvalidAttr, "cannot normalize a zero vector");
  return {a[0] / n, a[1] / n, a[2] / n};
}

Vec3 Camera::center() const {
  // c = -R^T t
  Vec3 c{};
  for (int i = 0; i < 3; ++i) {
    c[static_cast<size_t>(i)] = -(rotation[static_cast<size_t>(i)] * translation[0] +
                     rotation[static_cast<size_t>(3 + i)] * translation[1] +
                     rotation[static_cast<size_t>(6 + i)] * translation[2]);
  }
  return c;
}

Vec3 Camera::to_camera(const Vec3& p) const {
  Vec3 out{};
  for (int i = 0; i < 3; ++i) {
    out[static_cast<size_t>(i)] = rotation[static_cast<size_t>(3 * i)] * p[0] + rotation[static_cast<size_t>(3 * i + 1)] * p[1] +
                     rotation[static_cast<size_t>(3 * i + 2)] * p[2] + translation[static_cast<size_t>(i)];
  }
  return out;
}

Vec3 Camera::axis_world(int row) const {
  return {rotation[static_cast<size_t>(3 * row)], rotation[static_cast<size_t>(3 * row + 1)],
          rotation[static_cast<size_t>(3 * row + 2)]};
}

Camera make_camera(double focal, double c_row, double c_col, int64_t height, int64_t width,
                   const std::array<double, 9>& rotation, const Vec3& translation, int id) {
  require(focal > 0.0, Err::InvalidAttr, "focal length must be positive");
  require(height > 0 && width > 0, Err::InvalidAttr, "image size must be positive");
  // orthonormality within 1e-6
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) {
      double acc = 0.0;
      for (int k = 0; k < 3; ++k) {
        acc += rotation[static_cast<size_t>(3 * a + k)] * rotation[static_cast<size_t>(3 * b + k)];
      }
      const double expected = a == b ? 1.0 : 0.0;
      require(std::abs(acc - expected) <= 1e-6, Err::InvalidAttr,
              "rotation is not orthonormal");
    }
  }
  Camera cam;
  cam.focal = focal;
  cam.c_row = c_row;
  cam.c_col = c_col;
  cam.height = height;
  cam.width = width;
  cam.rotation = rotation;
  cam.translation = translation;
  cam.id = id;
  return cam;
}

Camera make_lookat_camera(const Vec3& position, const Vec3& look_at, double focal,
                          int64_t height, int64_t width, int id) {
  const Vec3 forward = normalized(look_at - position);
  Vec3 up_hint{0.0, 0.0, 1.0};
  if (std::abs(dot(forward, up_hint)) > 0.999) up_hint = {0.0, 1.0, 0.0};
  const Vec3 right = normalized(cross(forward, up_hint));
  const Vec3 down = cross(forward, right);  // +y is down in image space
  std::array<double, 9> rot = {right[0],   right[1],   right[2],   //
                               down[0],    down[1],    down[2],    //
                               forward[0], forward[1], forward[2]};
  const Vec3 t = {-dot(right, position), -dot(down, position), -dot(forward, position)};
  return make_camera(focal, (double(height) - 1.0) / 2.0, (double(width) - 1.0) / 2.0,
                     height, width, rot, t, id);
}

std::vector<Camera> make_arc_rig(int n_cameras, double arc_degrees, double radius,
                                 const Vec3& look_at, double focal, int64_t height,
                                 int64_t width) {
  require(n_cameras >= 2, Err::InvalidArc, "need at least two cameras");
  require(radius > 0.0 && arc_degrees >= 0.0, Err::InvalidArc,
          "radius must be positive and the arc nonnegative");
  std::vector<Camera> rig;
  rig.reserve(static_cast<size_t>(n_cameras));
  const double arc = arc_degrees * M_PI / 180.0;
  for (int i = 0; i < n_cameras; ++i) {
    const double theta = arc * (double(i) / double(n_cameras - 1) - 0.5);
    const Vec3 pos = look_at + Vec3{radius * std::sin(theta), -radius * std::cos(theta), 0.0};
    rig.push_back(make_lookat_camera(pos, look_at, focal, height, width, i));
  }
  return rig;
}

Ray make_ray(const Camera& camera, double t, double row, double col) {
  const Vec3 d_cam = {(col - camera.c_col) / camera.focal,
                      (row - camera.c_row) / camera.focal, 1.0};
  Vec3 d_world{};
  for (int i = 0; i < 3; ++i) {
    d_world[static_cast<size_t>(i)] = camera.rotation[static_cast<size_t>(i)] * d_cam[0] +
                         camera.rotation[static_cast<size_t>(3 + i)] * d_cam[1] +
                         camera.rotation[static_cast<size_t>(6 + i)] * d_cam[2];
  }
  Ray ray;
  ray.origin = camera.center();
  ray.direction = normalized(d_world);
  ray.t = t;
  ray.row = int64_t(std::llround(row));
  ray.col = int64_t(std::llround(col));
  ray.camera_id = camera.id;
  return ray;
}

std::vector<Ray> generate_rays(const Camera& camera, double t,
                               const std::vector<std::pair<int64_t, int64_t>>& pixels) {
  std::vector<Ray> rays;
  rays.reserve(pixels.size());
  for (const auto& [row, col] : pixels) {
    require(row >= 0 && row < camera.height && col >= 0 && col < camera.width,
            Err::OutOfBounds, "pixel outside image bounds");
    rays.push_back(make_ray(camera, t, double(row), double(col)));
  }
  return rays;
}

std::vector<Ray> generate_rays_full(const Camera& camera, double t) {
  std::vector<Ray> rays;
  rays.reserve(static_cast<size_t>(camera.height * camera.width));
  for (int64_t row = 0; row < camera.height; ++row) {
    for (int64_t col = 0; col < camera.width; ++col) {
      rays.push_back(make_ray(camera, t, double(row), double(col)));
    }
  }
  return rays;
}

std::pair<double, double> project_ray(const Camera& camera, const Vec3& point) {
  const Vec3 p = camera.to_camera(point);
  require(p[2] > 0.0, Err::BehindCamera, "point has non-positive depth");
  return {camera.focal * p[1] / p[2] + camera.c_row,
          camera.focal * p[0] / p[2] + camera.c_col};
}

}  // namespace fluidfm::render
