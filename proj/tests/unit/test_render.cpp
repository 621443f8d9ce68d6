#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "fluidfm/pde/solvers.hpp"
#include "fluidfm/render/video.hpp"
#include "fluidfm/tensor/grad_check.hpp"
#include "fluidfm/util/errors.hpp"

using namespace fluidfm;
using namespace fluidfm::render;

namespace {

std::vector<Camera> test_rig() {
  return make_arc_rig(5, 120.0, 2.0, {0.5, 0.5, 0.5}, 40.0, 64, 64);
}

}  // namespace

TEST_CASE("arc rig spaces cameras 30 degrees apart and aims at the target") {
  auto rig = test_rig();
  REQUIRE(rig.size() == 5);
  const Vec3 target{0.5, 0.5, 0.5};
  std::vector<double> angles;
  for (const Camera& cam : rig) {
    const Vec3 c = cam.center();
    CHECK(norm(c - target) == doctest::Approx(2.0));
    angles.push_back(std::atan2(c[0] - target[0], -(c[1] - target[1])));
    // optical axis passes through the target
    const Vec3 fwd = cam.axis_world(2);
    const Vec3 to_target = normalized(target - c);
    CHECK(norm(cross(fwd, to_target)) <= 1e-9);
    auto [row, col] = project_ray(cam, target);
    CHECK(row == doctest::Approx(cam.c_row).epsilon(1e-9));
    CHECK(col == doctest::Approx(cam.c_col).epsilon(1e-9));
  }
  for (size_t i = 1; i < angles.size(); ++i) {
    CHECK((angles[i] - angles[i - 1]) * 180.0 / M_PI == doctest::Approx(30.0));
  }
}

TEST_CASE("degenerate arc places both cameras at the same point") {
  auto rig = make_arc_rig(2, 0.0, 1.5, {0, 0, 0}, 30.0, 16, 16);
  CHECK(norm(rig[0].center() - rig[1].center()) <= 1e-12);
  CHECK_THROWS_AS(make_arc_rig(2, 120.0, -1.0, {0, 0, 0}, 30.0, 16, 16), FluidError);
}

TEST_CASE("full-image ray generation counts pixels") {
  auto rig = test_rig();
  CHECK(generate_rays_full(rig[0], 0.0).size() == 4096);
  const Ray center = make_ray(rig[0], 0.0, rig[0].c_row, rig[0].c_col);
  const Vec3 axis = rig[0].axis_world(2);
  CHECK(norm(center.direction - axis) <= 1e-12);
  CHECK_THROWS_AS(generate_rays(rig[0], 0.0, {{64, 0}}), FluidError);
}

TEST_CASE("projection round trip stays under 1e-6 px for whole images") {
  // three poses: two rig ends and one raised oblique camera
  auto rig = test_rig();
  std::vector<Camera> poses = {rig[0], rig[4],
                               make_lookat_camera({1.8, -1.2, 1.9}, {0.5, 0.5, 0.5}, 40.0,
                                                  64, 64, 7)};
  for (const Camera& cam : poses) {
    double worst = 0.0;
    for (int64_t row = 0; row < 64; ++row) {
      for (int64_t col = 0; col < 64; ++col) {
        const Ray ray = make_ray(cam, 0.0, double(row), double(col));
        for (double depth : {1.0, 2.0}) {
          const Vec3 p = ray.origin + depth * ray.direction;
          auto [r, c] = project_ray(cam, p);
          worst = std::max({worst, std::abs(r - double(row)), std::abs(c - double(col))});
        }
      }
    }
    CHECK(worst <= 1e-6);
  }
}

TEST_CASE("points on one ray project identically (collinearity)") {
  auto cam = test_rig()[1];
  const Ray ray = make_ray(cam, 0.0, 10.0, 50.0);
  const Vec3 p1 = ray.origin + 1.0 * ray.direction;
  const Vec3 p2 = ray.origin + 2.0 * ray.direction;
  auto [r1, c1] = project_ray(cam, p1);
  auto [r2, c2] = project_ray(cam, p2);
  CHECK(std::abs(r1 - r2) <= 1e-6);
  CHECK(std::abs(c1 - c2) <= 1e-6);
  CHECK_THROWS_AS(project_ray(cam, cam.center() - 1.0 * cam.axis_world(2)), FluidError);
}

TEST_CASE("uniform slab matches the closed-form intensity") {
  Ray ray;
  ray.origin = {0, 0, 0};
  ray.direction = {1, 0, 0};
  DensitySampler constant = [](const Vec3&, double) { return 2.0; };
  SUBCASE("empty space renders zero") {
    DensitySampler zero = [](const Vec3&, double) { return 0.0; };
    CHECK(render_ray(zero, ray, 1.0, 1.5, 64) == doctest::Approx(0.0));
  }
  SUBCASE("midpoint quadrature at 256 and 1024 samples") {
    const double expected = 1.0 - std::exp(-1.0);
    CHECK(std::abs(render_ray(constant, ray, 1.0, 1.5, 256) - expected) <= 1e-3);
    CHECK(std::abs(render_ray(constant, ray, 1.0, 1.5, 1024) - expected) <= 1e-4);
  }
  SUBCASE("doubled density strictly increases intensity") {
    DensitySampler doubled = [](const Vec3&, double) { return 4.0; };
    CHECK(render_ray(doubled, ray, 1.0, 1.5, 128) > render_ray(constant, ray, 1.0, 1.5, 128));
  }
  SUBCASE("negative densities violate the sampler contract") {
    DensitySampler bad = [](const Vec3&, double) { return -1.0; };
    CHECK_THROWS_AS(render_ray(bad, ray, 1.0, 1.5, 16), FluidError);
    CHECK_THROWS_AS(render_ray(constant, ray, 1.5, 1.0, 16), FluidError);
  }
}

TEST_CASE("intensity is monotone in pointwise density") {
  Rng rng(3);
  auto cam = test_rig()[0];
  Box box{{0, 0, 0}, {1, 1, 1}};
  for (int k = 0; k < 10; ++k) {
    const int64_t row = rng.uniform_int(64), col = rng.uniform_int(64);
    const Ray ray = make_ray(cam, 0.0, double(row), double(col));
    const RaySpan span = intersect_box(ray, box);
    if (!span.hit) continue;
    const double amp = 0.3 + rng.uniform();
    DensitySampler base = [amp](const Vec3& p, double) {
      return amp * (1.0 + std::sin(7.0 * p[0]) * std::sin(5.0 * p[1]) * std::sin(3.0 * p[2]));
    };
    DensitySampler scaled = [&base](const Vec3& p, double t) { return 1.1 * base(p, t); };
    CHECK(render_ray(scaled, ray, span.near, span.far, 64) >=
          render_ray(base, ray, span.near, span.far, 64));
  }
}

TEST_CASE("differentiable compositing matches the scalar path and its gradient") {
  using namespace fluidfm::tensor;
  ScalarModeScope mode(Scalar::F64);
  const int n = 16;
  Rng rng(11);
  std::vector<double> sig(n), del(n, 0.5 / n);
  for (auto& v : sig) v = rng.uniform() * 2.0;
  Tensor sigmas = Tensor::from_data({1, n}, sig);
  Tensor deltas = Tensor::from_data({1, n}, del);

  // scalar reference
  double transmittance = 1.0, expected = 0.0;
  for (int i = 0; i < n; ++i) {
    const double alpha = 1.0 - std::exp(-sig[size_t(i)] * del[size_t(i)]);
    expected += transmittance * alpha;
    transmittance *= 1.0 - alpha;
  }
  CHECK(composite(sigmas, deltas).at(0) == doctest::Approx(expected).epsilon(1e-12));

  const double err = grad_check_fn(
      [&](std::span<const Tensor> in) { return composite(in[0], in[1]); },
      {sigmas, deltas}, 1e-4);
  CHECK(err < 1e-4);
}

TEST_CASE("ground-truth video rendering") {
  pde::PdeSpec spec = pde::PdeSpec::buoyant_smoke(16, 5);
  pde::Trajectory traj = pde::simulate_buoyant_smoke(spec, 6, 2);
  auto rig = make_arc_rig(3, 120.0, 2.0, {0.5, 0.5, 0.5}, 20.0, 32, 32);

  SUBCASE("zero density gives black frames") {
    pde::PdeSpec quiet = pde::PdeSpec::buoyant_smoke(16, 5);
    quiet.params["s"] = 0.0;
    quiet.params["beta"] = 0.0;
    pde::Trajectory empty = pde::simulate_buoyant_smoke(quiet, 2);
    VideoSet video = render_video(empty, rig, 1, 32);
    for (const auto& cam_frames : video.frames) {
      for (const Frame& f : cam_frames) {
        for (float v : f.values) CHECK(v == 0.0f);
      }
    }
  }

  SUBCASE("frames stay in [0,1] and rendering is deterministic") {
    VideoSet a = render_video(traj, rig, 1, 32);
    VideoSet b = render_video(traj, rig, 1, 32);
    for (int cam = 0; cam < a.n_cameras(); ++cam) {
      for (int64_t t = 0; t < a.n_frames(); ++t) {
        const Frame& f = a.frame(cam, t);
        for (float v : f.values) {
          CHECK(v >= 0.0f);
          CHECK(v <= 1.0f);
        }
        CHECK(f.values == b.frame(cam, t).values);
      }
    }
  }

  SUBCASE("video set round trips through its directory format") {
    VideoSet video = render_video(traj, rig, 1, 16);
    const std::string dir =
        (std::filesystem::temp_directory_path() / "fluidfm_video_test").string();
    video.save(dir);
    VideoSet loaded = VideoSet::load(dir);
    CHECK(loaded.held_out_camera == video.held_out_camera);
    CHECK(loaded.n_frames() == video.n_frames());
    CHECK(loaded.frame(0, 1).values == video.frame(0, 1).values);
    CHECK(loaded.cameras[2].rotation == video.cameras[2].rotation);
    CHECK(loaded.training_cameras() == std::vector<int>{0, 2});
    std::filesystem::remove_all(dir);
  }

  SUBCASE("missing density channel raises") {
    pde::PdeSpec swe = pde::PdeSpec::shallow_water(16, 1);
    pde::Trajectory flat = pde::simulate_shallow_water(swe, 0);
    CHECK_THROWS_AS(render_video(flat, rig, 1, 8), FluidError);
  }
}
