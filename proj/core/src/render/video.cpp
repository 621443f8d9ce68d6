#include "fluidfm/render/video.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "fluidfm/util/errors.hpp"
#include "fluidfm/util/fldt.hpp"
#include "fluidfm/util/thread_pool.hpp"

namespace fluidfm::render {

namespace fs = std::filesystem;
using nlohmann::json;

const Frame& VideoSet::frame(int camera_id, int64_t t) const {
  require(camera_id >= 0 && camera_id < n_cameras(), Err::OutOfBounds, "camera id");
  require(t >= 0 && t < int64_t(frames[static_cast<size_t>(camera_id)].size()), Err::OutOfBounds,
          "frame index");
  return frames[static_cast<size_t>(camera_id)][static_cast<size_t>(t)];
}

std::vector<int> VideoSet::training_cameras() const {
  std::vector<int> out;
  for (int c = 0; c < n_cameras(); ++c) {
    if (c != held_out_camera) out.push_back(c);
  }
  return out;
}

VideoSet render_video(const pde::Trajectory& trajectory, const std::vector<Camera>& cameras,
                      int held_out_camera, int n_samples, double extinction) {
  const auto& names = trajectory.channel_names;
  const auto sigma_it = std::find(names.begin(), names.end(), "sigma");
  require(sigma_it != names.end(), Err::MissingDensityChannel,
          "trajectory has no sigma channel");
  const int64_t sigma_c = sigma_it - names.begin();
  require(trajectory.dims.size() == 5, Err::ShapeMismatch, "expected a 3D trajectory");
  const int64_t d = trajectory.dims[2], h = trajectory.dims[3], w = trajectory.dims[4];

  VideoSet video;
  video.cameras = cameras;
  video.held_out_camera = held_out_camera;
  video.scene_box.lo = trajectory.spec.domain_min;
  video.scene_box.hi = trajectory.spec.domain_max;
  video.extinction = extinction;
  video.frames.resize(cameras.size());

  const int64_t n_frames = trajectory.frames();
  for (size_t cam = 0; cam < cameras.size(); ++cam) {
    video.frames[cam].resize(static_cast<size_t>(n_frames));
  }
  // pure function of (camera, frame): parallel across frames
  const int64_t jobs = int64_t(cameras.size()) * n_frames;
  parallel_for(jobs, [&](int64_t job) {
    const size_t cam = static_cast<size_t>(job / n_frames);
    const int64_t t = job % n_frames;
    const Camera& camera = cameras[cam];
    // copy the channel so the sampler owns contiguous data
    auto plane = trajectory.channel(t, sigma_c);
    std::vector<float> grid(plane.begin(), plane.end());
    DensitySampler sampler = grid_sampler(grid, d, h, w, video.scene_box, extinction);
    Frame frame;
    frame.height = camera.height;
    frame.width = camera.width;
    frame.t = t;
    frame.camera_id = camera.id;
    frame.values.resize(static_cast<size_t>(camera.height * camera.width), 0.0f);
    for (int64_t row = 0; row < camera.height; ++row) {
      for (int64_t col = 0; col < camera.width; ++col) {
        const Ray ray = make_ray(camera, double(t), double(row), double(col));
        const RaySpan span = intersect_box(ray, video.scene_box);
        if (!span.hit) continue;
        frame.values[static_cast<size_t>(row * camera.width + col)] =
            float(render_ray(sampler, ray, span.near, span.far, n_samples));
      }
    }
    video.frames[cam][static_cast<size_t>(t)] = std::move(frame);
  });
  return video;
}

void VideoSet::save(const std::string& dir) const {
  fs::create_directories(dir);
  json rig;
  rig["held_out_camera"] = held_out_camera;
  rig["extinction"] = extinction;
  rig["box_lo"] = scene_box.lo;
  rig["box_hi"] = scene_box.hi;
  json cams = json::array();
  for (const Camera& c : cameras) {
    json jc;
    jc["id"] = c.id;
    jc["focal"] = c.focal;
    jc["c_row"] = c.c_row;
    jc["c_col"] = c.c_col;
    jc["height"] = c.height;
    jc["width"] = c.width;
    jc["rotation"] = c.rotation;
    jc["translation"] = c.translation;
    cams.push_back(jc);
  }
  rig["cameras"] = cams;
  {
    std::ofstream os(fs::path(dir) / "rig.json");
    require(os.is_open(), Err::IoError, "cannot write rig manifest");
    os << rig.dump(2) << "\n";
  }
  for (size_t cam = 0; cam < cameras.size(); ++cam) {
    char name[32];
    std::snprintf(name, sizeof name, "cam%02zu", cam);
    const fs::path cam_dir = fs::path(dir) / name;
    fs::create_directories(cam_dir);
    const int64_t t_count = int64_t(frames[cam].size());
    const int64_t hh = cameras[cam].height, ww = cameras[cam].width;
    std::vector<float> stack;
    stack.reserve(static_cast<size_t>(t_count * hh * ww));
    for (const Frame& f : frames[cam]) {
      stack.insert(stack.end(), f.values.begin(), f.values.end());
    }
    json meta;
    meta["kind"] = "video";
    meta["camera_id"] = cameras[cam].id;
    fldt::write((cam_dir / "frames.fldt").string(), {t_count, 1, hh, ww}, stack,
                meta.dump());
  }
}

VideoSet VideoSet::load(const std::string& dir) {
  std::ifstream is(fs::path(dir) / "rig.json");
  require(is.is_open(), Err::MissingInput, "missing rig manifest in " + dir);
  const json rig = json::parse(is);
  VideoSet video;
  video.held_out_camera = rig.at("held_out_camera").get<int>();
  video.extinction = rig.at("extinction").get<double>();
  video.scene_box.lo = rig.at("box_lo").get<Vec3>();
  video.scene_box.hi = rig.at("box_hi").get<Vec3>();
  for (const auto& jc : rig.at("cameras")) {
    video.cameras.push_back(make_camera(
        jc.at("focal").get<double>(), jc.at("c_row").get<double>(),
        jc.at("c_col").get<double>(), jc.at("height").get<int64_t>(),
        jc.at("width").get<int64_t>(), jc.at("rotation").get<std::array<double, 9>>(),
        jc.at("translation").get<Vec3>(), jc.at("id").get<int>()));
  }
  video.frames.resize(video.cameras.size());
  for (size_t cam = 0; cam < video.cameras.size(); ++cam) {
    char name[32];
    std::snprintf(name, sizeof name, "cam%02zu", cam);
    const auto payload = fldt::read((fs::path(dir) / name / "frames.fldt").string());
    require(payload.dims.size() == 4 && payload.dims[1] == 1, Err::IoError,
            "video stack must be [T,1,H,W]");
    const int64_t t_count = payload.dims[0], hh = payload.dims[2], ww = payload.dims[3];
    for (int64_t t = 0; t < t_count; ++t) {
      Frame f;
      f.height = hh;
      f.width = ww;
      f.t = t;
      f.camera_id = video.cameras[cam].id;
      f.values.assign(payload.values.begin() + t * hh * ww,
                      payload.values.begin() + (t + 1) * hh * ww);
      video.frames[cam].push_back(std::move(f));
    }
  }
  return video;
}

}  // namespace fluidfm::render
