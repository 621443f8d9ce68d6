#include "fluidfm/pde/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "fluidfm/pde/solvers.hpp"
#include "fluidfm/util/errors.hpp"
#include "fluidfm/util/thread_pool.hpp"

namespace fluidfm::pde {

namespace fs = std::filesystem;
using nlohmann::json;

int64_t family_native_channels(Family f) {
  switch (f) {
    case Family::ReactionDiffusion: return 2;
    case Family::IncompressibleNs: return 3;
    case Family::CompressibleNs: return 4;
    case Family::ShallowWater: return 1;
    case Family::BuoyantSmoke: return 4;
  }
  return 0;
}

namespace {

/// Per-family sampling cadence: physical steps between stored frames chosen
/// so one frame step carries visible but learnable dynamics.
struct FamilyRecipe {
  int64_t record_every;
};

FamilyRecipe recipe_for(const PdeSpec& spec) {
  switch (spec.family) {
    case Family::ReactionDiffusion:
      return {std::max<int64_t>(1, int64_t(std::lround(0.5 / spec.dt)))};
    case Family::IncompressibleNs:
      return {std::max<int64_t>(1, int64_t(std::lround(0.2 / spec.dt)))};
    case Family::CompressibleNs:
      return {std::max<int64_t>(1, int64_t(std::lround(0.02 / spec.dt)))};
    case Family::ShallowWater:
      return {std::max<int64_t>(1, int64_t(std::lround(0.1 / spec.dt)))};
    case Family::BuoyantSmoke:
      return {1};
  }
  return {1};
}

Trajectory simulate_for_corpus(Family family, int64_t native_grid, int64_t frames,
                               uint64_t seed, int64_t index) {
  switch (family) {
    case Family::ReactionDiffusion: {
      PdeSpec spec = PdeSpec::reaction_diffusion(native_grid, seed);
      const auto r = recipe_for(spec);
      return simulate_reaction_diffusion(spec, {}, (frames - 1) * r.record_every,
                                         r.record_every);
    }
    case Family::IncompressibleNs: {
      PdeSpec spec = PdeSpec::incompressible_ns(native_grid, seed);
      const auto r = recipe_for(spec);
      return simulate_incompressible_ns(spec, {}, (frames - 1) * r.record_every,
                                        r.record_every);
    }
    case Family::CompressibleNs: {
      // both PDEBench Mach settings, alternating per trajectory
      const double mach = index % 2 == 0 ? 1.0 : 0.1;
      PdeSpec spec = PdeSpec::compressible_ns(native_grid, seed, mach);
      const auto r = recipe_for(spec);
      return simulate_compressible_ns(spec, {}, (frames - 1) * r.record_every,
                                      r.record_every);
    }
    case Family::ShallowWater: {
      PdeSpec spec = PdeSpec::shallow_water(native_grid, seed);
      Rng rng(derive_seed(seed, "swe_radius"));
      spec.params["r"] = rng.uniform(0.3, 0.7);
      const auto r = recipe_for(spec);
      return simulate_shallow_water(spec, (frames - 1) * r.record_every, r.record_every);
    }
    case Family::BuoyantSmoke:
      break;
  }
  raise(Err::EmptyFamily, "family not supported in the pretraining corpus");
}

Trajectory resample_trajectory(const Trajectory& src, int64_t res) {
  require(res > 0, Err::ResolutionMismatch, "non-positive target resolution");
  if (src.dims[2] == res && src.dims[3] == res) return src;
  Trajectory dst;
  dst.spec = src.spec;
  dst.spec.grid = {res, res};
  dst.dims = {src.dims[0], src.dims[1], res, res};
  dst.channel_names = src.channel_names;
  dst.dt = src.dt;
  dst.dx = src.dx * double(src.dims[2]) / double(res);
  dst.values.resize(static_cast<size_t>(dst.dims[0] * dst.dims[1] * res * res));
  const int64_t h = src.dims[2], w = src.dims[3];
  for (int64_t t = 0; t < src.dims[0]; ++t) {
    for (int64_t c = 0; c < src.dims[1]; ++c) {
      auto plane = src.channel(t, c);
      std::span<float> out(dst.values.data() + (t * dst.dims[1] + c) * res * res,
                           static_cast<size_t>(res * res));
      resize_bilinear(plane, h, w, out, res, res);
    }
  }
  return dst;
}

}  // namespace

std::vector<CorpusWindow> Corpus::train_windows(Family f) const {
  std::vector<CorpusWindow> out;
  for (size_t i = 0; i < trajectories.size(); ++i) {
    if (family_of[i] != f || is_validation[i]) continue;
    const int64_t frames = trajectories[i].frames();
    for (int64_t t0 = 0; t0 + t_in < frames; ++t0) {
      out.push_back({int32_t(i), int32_t(t0)});
    }
  }
  return out;
}

std::vector<CorpusWindow> Corpus::validation_windows(Family f) const {
  std::vector<CorpusWindow> out;
  for (size_t i = 0; i < trajectories.size(); ++i) {
    if (family_of[i] != f || !is_validation[i]) continue;
    const int64_t frames = trajectories[i].frames();
    for (int64_t t0 = 0; t0 + t_in < frames; ++t0) {
      out.push_back({int32_t(i), int32_t(t0)});
    }
  }
  return out;
}

CorpusWindow Corpus::sample_train(Rng& rng) const {
  require(!families.empty(), Err::EmptyFamily, "corpus has no families");
  const Family f = families[static_cast<size_t>(rng.uniform_int(int64_t(families.size())))];
  // windows are contiguous per (trajectory, t0); enumerate lazily
  std::vector<std::pair<int32_t, int64_t>> counts;  // (trajectory, windows)
  int64_t total = 0;
  for (size_t i = 0; i < trajectories.size(); ++i) {
    if (family_of[i] != f || is_validation[i]) continue;
    const int64_t wcount = std::max<int64_t>(0, trajectories[i].frames() - t_in);
    counts.emplace_back(int32_t(i), wcount);
    total += wcount;
  }
  require(total > 0, Err::EmptyFamily,
          std::string("no training windows for family ") + family_name(f));
  int64_t pick = rng.uniform_int(total);
  for (const auto& [traj, wcount] : counts) {
    if (pick < wcount) return {traj, int32_t(pick)};
    pick -= wcount;
  }
  return {counts.back().first, int32_t(counts.back().second - 1)};
}

Family Corpus::window_family(const CorpusWindow& w) const {
  return family_of[static_cast<size_t>(w.trajectory)];
}

int64_t Corpus::native_channels(const CorpusWindow& w) const {
  return trajectories[static_cast<size_t>(w.trajectory)].channels();
}

void Corpus::window_data(const CorpusWindow& w, std::vector<double>& input,
                         std::vector<double>& target) const {
  const Trajectory& traj = trajectories[static_cast<size_t>(w.trajectory)];
  const int64_t c_native = traj.channels();
  const int64_t hw = resolution * resolution;
  input.assign(static_cast<size_t>(t_in * kMaxChannels * hw), 0.0);
  target.assign(static_cast<size_t>(kMaxChannels * hw), 0.0);
  for (int64_t t = 0; t <= t_in; ++t) {
    const int64_t src_t = w.t0 + t;
    double* dst = t == t_in ? target.data() : input.data() + t * kMaxChannels * hw;
    for (int64_t c = 0; c < c_native; ++c) {
      auto plane = traj.channel(src_t, c);
      double* out = dst + c * hw;
      const double mu = stats.mean[static_cast<size_t>(c)], sd = stats.stdev[static_cast<size_t>(c)];
      for (int64_t i = 0; i < hw; ++i) out[i] = (double(plane[static_cast<size_t>(i)]) - mu) / sd;
    }
  }
}

Corpus build_pretraining_corpus(const std::vector<Family>& families,
                                const CorpusBuildConfig& config) {
  require(!families.empty(), Err::EmptyFamily, "no families requested");
  const std::vector<Family> required = {Family::ReactionDiffusion, Family::IncompressibleNs,
                                        Family::CompressibleNs, Family::ShallowWater};
  for (Family f : required) {
    require(std::find(families.begin(), families.end(), f) != families.end(),
            Err::EmptyFamily,
            std::string("pretraining corpus requires family ") + family_name(f));
  }
  require(config.per_family >= 2, Err::InvalidAttr, "need at least 2 trajectories/family");
  require(config.resolution > 0, Err::ResolutionMismatch, "non-positive target resolution");
  require(config.frames_per_trajectory > config.t_in, Err::InvalidAttr,
          "trajectories must be longer than T_in");

  Corpus corpus;
  corpus.families = families;
  corpus.t_in = config.t_in;
  corpus.resolution = config.resolution;
  corpus.build_config = config;

  const int64_t total = int64_t(families.size()) * config.per_family;
  corpus.trajectories.resize(static_cast<size_t>(total));
  corpus.family_of.resize(static_cast<size_t>(total));
  corpus.is_validation.resize(static_cast<size_t>(total));
  const int64_t n_val = std::max<int64_t>(1, int64_t(std::lround(
                                                 double(config.per_family) *
                                                 config.val_fraction)));

  parallel_for(total, [&](int64_t idx) {
    const int64_t fi = idx / config.per_family;
    const int64_t k = idx % config.per_family;
    const Family f = families[static_cast<size_t>(fi)];
    const uint64_t seed =
        derive_seed(config.seed, std::string(family_name(f)) + "/" + std::to_string(k));
    Trajectory traj = simulate_for_corpus(f, config.native_grid,
                                          config.frames_per_trajectory, seed, k);
    corpus.trajectories[static_cast<size_t>(idx)] = resample_trajectory(traj, config.resolution);
    corpus.family_of[static_cast<size_t>(idx)] = f;
    corpus.is_validation[static_cast<size_t>(idx)] = k >= config.per_family - n_val;
  });

  // z-score statistics over native entries of the training split
  std::array<double, kMaxChannels> sum{}, sumsq{};
  std::array<int64_t, kMaxChannels> count{};
  for (size_t i = 0; i < corpus.trajectories.size(); ++i) {
    if (corpus.is_validation[i]) continue;
    const Trajectory& t = corpus.trajectories[i];
    for (int64_t c = 0; c < t.channels(); ++c) {
      for (int64_t fr = 0; fr < t.frames(); ++fr) {
        for (float v : t.channel(fr, c)) {
          sum[static_cast<size_t>(c)] += double(v);
          sumsq[static_cast<size_t>(c)] += double(v) * double(v);
          ++count[static_cast<size_t>(c)];
        }
      }
    }
  }
  for (int64_t c = 0; c < kMaxChannels; ++c) {
    if (count[static_cast<size_t>(c)] == 0) continue;  // fully padded channel: mean 0, std 1
    const double mu = sum[static_cast<size_t>(c)] / double(count[static_cast<size_t>(c)]);
    const double var = sumsq[static_cast<size_t>(c)] / double(count[static_cast<size_t>(c)]) - mu * mu;
    corpus.stats.mean[static_cast<size_t>(c)] = mu;
    corpus.stats.stdev[static_cast<size_t>(c)] = var > 1e-12 ? std::sqrt(var) : 1.0;
  }
  return corpus;
}

void Corpus::save(const std::string& dir) const {
  fs::create_directories(dir);
  json manifest;
  manifest["t_in"] = t_in;
  manifest["resolution"] = resolution;
  manifest["stats"]["mean"] = stats.mean;
  manifest["stats"]["std"] = stats.stdev;
  manifest["per_family"] = build_config.per_family;
  manifest["native_grid"] = build_config.native_grid;
  manifest["frames_per_trajectory"] = build_config.frames_per_trajectory;
  manifest["val_fraction"] = build_config.val_fraction;
  manifest["seed"] = build_config.seed;
  std::vector<std::string> fam_names;
  for (Family f : families) fam_names.emplace_back(family_name(f));
  manifest["families"] = fam_names;
  json items = json::array();
  for (size_t i = 0; i < trajectories.size(); ++i) {
    char name[64];
    std::snprintf(name, sizeof name, "traj_%04zu.fldt", i);
    trajectories[i].save((fs::path(dir) / name).string());
    json item;
    item["file"] = name;
    item["family"] = family_name(family_of[i]);
    item["validation"] = bool(is_validation[i]);
    item["windows"] = std::max<int64_t>(0, trajectories[i].frames() - t_in);
    items.push_back(item);
  }
  manifest["trajectories"] = items;
  std::ofstream os(fs::path(dir) / "manifest.json");
  require(os.is_open(), Err::IoError, "cannot write corpus manifest");
  os << manifest.dump(2) << "\n";
}

Corpus Corpus::load(const std::string& dir) {
  std::ifstream is(fs::path(dir) / "manifest.json");
  require(is.is_open(), Err::MissingInput, "missing corpus manifest in " + dir);
  json manifest = json::parse(is);
  Corpus corpus;
  corpus.t_in = manifest.at("t_in").get<int64_t>();
  corpus.resolution = manifest.at("resolution").get<int64_t>();
  corpus.stats.mean = manifest.at("stats").at("mean").get<std::array<double, 4>>();
  corpus.stats.stdev = manifest.at("stats").at("std").get<std::array<double, 4>>();
  corpus.build_config.per_family = manifest.at("per_family").get<int64_t>();
  corpus.build_config.native_grid = manifest.at("native_grid").get<int64_t>();
  corpus.build_config.frames_per_trajectory =
      manifest.at("frames_per_trajectory").get<int64_t>();
  corpus.build_config.val_fraction = manifest.at("val_fraction").get<double>();
  corpus.build_config.seed = manifest.at("seed").get<uint64_t>();
  for (const auto& name : manifest.at("families")) {
    corpus.families.push_back(family_from_name(name.get<std::string>()));
  }
  for (const auto& item : manifest.at("trajectories")) {
    corpus.trajectories.push_back(
        Trajectory::load((fs::path(dir) / item.at("file").get<std::string>()).string()));
    corpus.family_of.push_back(family_from_name(item.at("family").get<std::string>()));
    corpus.is_validation.push_back(item.at("validation").get<bool>());
  }
  return corpus;
}

}  // namespace fluidfm::pde
