#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace fluidfm::render {

using Vec3 = std::array<double, 3>;

inline Vec3 operator+(const Vec3& a, const Vec3& b) {
  return {a[0] + b[0], a[1] + b[1], a[2] + b[2]};
}
inline Vec3 operator-(const Vec3& a, const Vec3& b) {
  return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}
inline Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
inline double dot(const Vec3& a, const Vec3& b) {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}
inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
double norm(const Vec3& a);
Vec3 normalized(const Vec3& a);

/// Pinhole camera. Convention: camera space has +x right, +y down (image
/// rows), +z forward; x_cam = R x_world + t. Integer pixel (row, col) means
/// the pixel center and projects to continuous (row, col) exactly.
struct Camera {
  double focal = 1.0;                      // pixels
  double c_row = 0.0, c_col = 0.0;         // principal point
  int64_t height = 0, width = 0;
  std::array<double, 9> rotation{};        // row-major world-to-camera
  Vec3 translation{};
  int id = 0;

  Vec3 center() const;                     // camera position in world space
  Vec3 to_camera(const Vec3& p) const;     // R p + t
  Vec3 axis_world(int row) const;          // row of R expressed in world coords
};

/// Validates orthonormality (1e-6) and focal > 0.
Camera make_camera(double focal, double c_row, double c_col, int64_t height, int64_t width,
                   const std::array<double, 9>& rotation, const Vec3& translation, int id);

/// Look-at construction with +z up as the horizon reference.
Camera make_lookat_camera(const Vec3& position, const Vec3& look_at, double focal,
                          int64_t height, int64_t width, int id);

struct Ray {
  Vec3 origin{};
  Vec3 direction{};  // unit
  double t = 0.0;    // frame-unit time coordinate
  int64_t row = 0, col = 0;
  int camera_id = 0;
};

struct Frame {
  std::vector<float> values;  // [height, width] in [0,1]
  int64_t height = 0, width = 0;
  int64_t t = 0;
  int camera_id = 0;

  float at(int64_t row, int64_t col) const { return values[size_t(row * width + col)]; }
};

/// Cameras evenly spaced over an arc (degrees) of the horizontal circle of
/// the given radius around look_at, all aimed at look_at. The central camera
/// (index n/2) is the conventional held-out test view.
std::vector<Camera> make_arc_rig(int n_cameras, double arc_degrees, double radius,
                                 const Vec3& look_at, double focal, int64_t height,
                                 int64_t width);

/// One ray per listed pixel, through the pixel center, at time t.
std::vector<Ray> generate_rays(const Camera& camera, double t,
                               const std::vector<std::pair<int64_t, int64_t>>& pixels);
std::vector<Ray> generate_rays_full(const Camera& camera, double t);
Ray make_ray(const Camera& camera, double t, double row, double col);

/// Perspective projection to continuous (row, col); raises BehindCamera for
/// non-positive depth.
std::pair<double, double> project_ray(const Camera& camera, const Vec3& point);

}  // namespace fluidfm::render
