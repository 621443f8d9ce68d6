#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "fluidfm/pde/corpus.hpp"
#include "fluidfm/pde/solvers.hpp"
#include "fluidfm/util/errors.hpp"

using namespace fluidfm;
using namespace fluidfm::pde;

TEST_CASE("reaction-diffusion holds its analytic steady state") {
  PdeSpec spec = PdeSpec::reaction_diffusion(32, 1);
  const double k = spec.param("k");
  const double star = -std::cbrt(k);
  const int64_t n = spec.grid[0] * spec.grid[1];
  std::vector<double> init(size_t(2 * n), star);
  Trajectory traj = simulate_reaction_diffusion(spec, init, 100);
  auto first = traj.frame(0);
  auto last = traj.frame(traj.frames() - 1);
  double worst = 0.0;
  for (size_t i = 0; i < first.size(); ++i) {
    worst = std::max(worst, std::abs(double(last[i]) - double(first[i])));
  }
  CHECK(worst <= 1e-10);
  CHECK(double(first[0]) == doctest::Approx(star));
}

TEST_CASE("reaction-diffusion zero fixed point with k=0 and no diffusion") {
  PdeSpec spec = PdeSpec::reaction_diffusion(16, 1);
  spec.params["D_u"] = 0.0;
  spec.params["D_v"] = 0.0;
  spec.params["k"] = 0.0;
  const int64_t n = spec.grid[0] * spec.grid[1];
  std::vector<double> init(size_t(2 * n), 0.0);
  Trajectory traj = simulate_reaction_diffusion(spec, init, 20);
  for (float v : traj.values) CHECK(v == 0.0f);
}

TEST_CASE("reaction-diffusion paper defaults stay finite at the quarter-CFL step") {
  PdeSpec spec = PdeSpec::reaction_diffusion(32, 7);
  CHECK(spec.param("D_u") == doctest::Approx(5e-3));
  CHECK(spec.param("D_v") == doctest::Approx(1e-3));
  CHECK(spec.param("k") == doctest::Approx(5e-3));
  CHECK(spec.dt == doctest::Approx(0.25 * spec.dx() * spec.dx() / (4.0 * 5e-3)));
  Trajectory traj = simulate_reaction_diffusion(spec, {}, 50);
  CHECK(traj.all_finite());
}

TEST_CASE("reaction-diffusion rejects CFL-violating steps") {
  PdeSpec spec = PdeSpec::reaction_diffusion(32, 7);
  spec.dt = spec.dx() * spec.dx() / (4.0 * spec.param("D_u"));  // full bound > 0.4 bound
  CHECK_THROWS_AS(simulate_reaction_diffusion(spec, {}, 1), FluidError);
}

TEST_CASE("incompressible NS reproduces Taylor-Green decay") {
  const int64_t n = 64;
  PdeSpec spec = PdeSpec::incompressible_ns(n, 1);
  spec.dt = 0.02;
  const double nu = spec.param("nu");
  std::vector<double> init(size_t(2 * n * n));
  for (int64_t i = 0; i < n; ++i) {
    const double y = 2.0 * M_PI * double(i) / double(n);
    for (int64_t j = 0; j < n; ++j) {
      const double x = 2.0 * M_PI * double(j) / double(n);
      init[size_t(i * n + j)] = std::sin(x) * std::cos(y);
      init[size_t(n * n + i * n + j)] = -std::cos(x) * std::sin(y);
    }
  }
  Trajectory traj = simulate_incompressible_ns(spec, init, 50, 50);
  const double decay = std::exp(-2.0 * nu * 1.0);
  double worst = 0.0;
  for (int64_t i = 0; i < n * n; ++i) {
    worst = std::max(worst, std::abs(double(traj.channel(1, 0)[size_t(i)]) -
                                     decay * init[size_t(i)]));
    worst = std::max(worst, std::abs(double(traj.channel(1, 1)[size_t(i)]) -
                                     decay * init[size_t(n * n + i)]));
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("incompressible NS rest state stays at rest") {
  PdeSpec spec = PdeSpec::incompressible_ns(32, 1);
  std::vector<double> init(size_t(2 * 32 * 32), 0.0);
  Trajectory traj = simulate_incompressible_ns(spec, init, 10);
  for (float v : traj.values) CHECK(v == 0.0f);
}

TEST_CASE("incompressible NS stays spectrally divergence-free every step") {
  PdeSpec spec = PdeSpec::incompressible_ns(48, 3);
  InsDiagnostics diag;
  Trajectory traj = simulate_incompressible_ns(spec, {}, 40, 1, &diag);
  CHECK(diag.max_divergence.size() == size_t(traj.frames()));
  for (double d : diag.max_divergence) CHECK(d <= 1e-10);
}

TEST_CASE("compressible NS keeps a uniform state exactly") {
  PdeSpec spec = PdeSpec::compressible_ns(32, 1);
  const int64_t hw = 32 * 32;
  std::vector<double> init(size_t(4 * hw));
  for (int64_t i = 0; i < hw; ++i) {
    init[size_t(i)] = 0.0;
    init[size_t(hw + i)] = 0.0;
    init[size_t(2 * hw + i)] = 1.0;
    init[size_t(3 * hw + i)] = 1.0;
  }
  Trajectory traj = simulate_compressible_ns(spec, init, 50, 50);
  for (int64_t c = 0; c < 4; ++c) {
    const double expected = c >= 2 ? 1.0 : 0.0;
    for (float v : traj.channel(1, c)) {
      CHECK(std::abs(double(v) - expected) <= 1e-12);
    }
  }
}

TEST_CASE("compressible NS sound speed sets the CFL bound") {
  PdeSpec spec = PdeSpec::compressible_ns(32, 1, 1.0);
  const double cs = std::sqrt(5.0 / 3.0);
  CHECK(cs == doctest::Approx(1.2910).epsilon(1e-4));
  CHECK(cfl_dt_bound(spec) == doctest::Approx(spec.dx() / (2.0 * cs)));
}

TEST_CASE("compressible NS conserves mass to 1e-8 over 100 steps") {
  PdeSpec spec = PdeSpec::compressible_ns(32, 5, 0.1);
  std::vector<double> mass;
  simulate_compressible_ns(spec, {}, 100, 10, &mass);
  for (double m : mass) {
    CHECK(std::abs(m - mass[0]) / std::abs(mass[0]) <= 1e-8);
  }
}

TEST_CASE("shallow water initial dam break field") {
  PdeSpec spec = PdeSpec::shallow_water(64, 1);
  Trajectory traj = simulate_shallow_water(spec, 0);
  auto h = traj.channel(0, 0);
  const double dx = spec.dx();
  for (int64_t i = 0; i < 64; ++i) {
    const double y = -2.5 + (double(i) + 0.5) * dx;
    for (int64_t j = 0; j < 64; ++j) {
      const double x = -2.5 + (double(j) + 0.5) * dx;
      const double expected = std::sqrt(x * x + y * y) < 0.5 ? 2.0 : 1.0;
      CHECK(double(h[size_t(i * 64 + j)]) == doctest::Approx(expected));
    }
  }
}

TEST_CASE("shallow water initial mass matches the analytic disk integral") {
  // grid where the midpoint discretization of the disk sits within one cell area
  PdeSpec spec = PdeSpec::shallow_water(32, 1);
  std::vector<double> mass;
  simulate_shallow_water(spec, 0, 1, &mass);
  const double analytic = 25.0 + M_PI * 0.25;
  const double cell_area = spec.dx() * spec.dx();
  CHECK(std::abs(mass[0] - analytic) <= cell_area);
}

TEST_CASE("shallow water conserves mass under reflective walls") {
  PdeSpec spec = PdeSpec::shallow_water(48, 1);
  std::vector<double> mass;
  simulate_shallow_water(spec, 200, 20, &mass);
  for (double m : mass) {
    CHECK(std::abs(m - mass[0]) / std::abs(mass[0]) <= 1e-8);
  }
}

TEST_CASE("shallow water preserves the dam break's D4 symmetry") {
  const int64_t n = 64;
  PdeSpec spec = PdeSpec::shallow_water(n, 1);
  // wave reaches the wall at t ~ (2.5 - r)/sqrt(g*h0) = 1.41; stay inside
  const int64_t steps = int64_t(1.0 / spec.dt);
  Trajectory traj = simulate_shallow_water(spec, steps, steps);
  for (int64_t t = 0; t < traj.frames(); ++t) {
    auto h = traj.channel(t, 0);
    double worst = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      for (int64_t j = 0; j < n; ++j) {
        const double v = h[size_t(i * n + j)];
        worst = std::max(worst, std::abs(v - double(h[size_t(i * n + (n - 1 - j))])));
        worst = std::max(worst, std::abs(v - double(h[size_t((n - 1 - i) * n + j)])));
        worst = std::max(worst, std::abs(v - double(h[size_t(j * n + i)])));
      }
    }
    CHECK(worst <= 1e-12);
  }
}

TEST_CASE("smoke rest state with no source stays zero") {
  PdeSpec spec = PdeSpec::buoyant_smoke(16, 1);
  spec.params["beta"] = 0.0;
  spec.params["s"] = 0.0;
  Trajectory traj = simulate_buoyant_smoke(spec, 5);
  for (float v : traj.values) CHECK(v == 0.0f);
}

TEST_CASE("smoke projection keeps relative divergence under 1e-5") {
  PdeSpec spec = PdeSpec::buoyant_smoke(24, 3);
  SmokeDiagnostics diag;
  simulate_buoyant_smoke(spec, 30, 5, &diag);
  for (size_t i = 1; i < diag.max_divergence.size(); ++i) {
    if (diag.max_speed[i] < 1e-12) continue;
    CHECK(diag.max_divergence[i] / diag.max_speed[i] <= 1e-5);
  }
}

TEST_CASE("smoke plume's center of mass rises") {
  PdeSpec spec = PdeSpec::buoyant_smoke(24, 11);
  Trajectory traj = simulate_buoyant_smoke(spec, 50);
  const int64_t n = 24;
  std::vector<double> cm;
  for (int64_t t = 1; t < traj.frames(); ++t) {
    auto sigma = traj.channel(t, 0);
    double num = 0.0, den = 0.0;
    for (int64_t d = 0; d < n; ++d) {
      const double z = (double(d) + 0.5) / double(n);
      for (int64_t i = 0; i < n * n; ++i) {
        const double v = sigma[size_t(d * n * n + i)];
        num += v * z;
        den += v;
      }
    }
    if (den > 0) cm.push_back(num / den);
  }
  REQUIRE(cm.size() >= 40);
  for (size_t i = 1; i < cm.size(); ++i) {
    CHECK(cm[i] > cm[i - 1]);
  }
}

TEST_CASE("trajectory files round trip bit-exactly") {
  PdeSpec spec = PdeSpec::shallow_water(16, 9);
  Trajectory traj = simulate_shallow_water(spec, 4);
  const std::string path = (std::filesystem::temp_directory_path() / "t.fldt").string();
  traj.save(path);
  Trajectory loaded = Trajectory::load(path);
  CHECK(loaded.values == traj.values);
  CHECK(loaded.dims == traj.dims);
  CHECK(loaded.channel_names == traj.channel_names);
  CHECK(loaded.spec.params == traj.spec.params);
  std::filesystem::remove(path);
}

TEST_CASE("deterministic resimulation is bit-identical") {
  PdeSpec spec = PdeSpec::incompressible_ns(32, 42);
  Trajectory a = simulate_incompressible_ns(spec, {}, 10, 5);
  Trajectory b = simulate_incompressible_ns(spec, {}, 10, 5);
  CHECK(a.values == b.values);
}

TEST_CASE("pretraining corpus windows and statistics") {
  CorpusBuildConfig cfg;
  cfg.per_family = 3;
  cfg.resolution = 32;
  cfg.native_grid = 32;
  cfg.frames_per_trajectory = 13;
  cfg.seed = 77;
  const std::vector<Family> families = {Family::ReactionDiffusion, Family::IncompressibleNs,
                                        Family::CompressibleNs, Family::ShallowWater};
  Corpus corpus = build_pretraining_corpus(families, cfg);

  SUBCASE("zero-padded channels are exactly zero") {
    auto windows = corpus.train_windows(Family::ShallowWater);
    REQUIRE(!windows.empty());
    std::vector<double> input, target;
    corpus.window_data(windows[0], input, target);
    const int64_t hw = 32 * 32;
    for (int64_t t = 0; t < cfg.t_in; ++t) {
      for (int64_t c = 1; c < kMaxChannels; ++c) {
        for (int64_t i = 0; i < hw; ++i) {
          CHECK(input[size_t((t * kMaxChannels + c) * hw + i)] == 0.0);
        }
      }
    }
  }

  SUBCASE("window inputs carry T_in frames") {
    std::vector<double> input, target;
    corpus.window_data(corpus.train_windows(Family::ReactionDiffusion)[0], input, target);
    CHECK(input.size() == size_t(cfg.t_in * kMaxChannels * 32 * 32));
    CHECK(target.size() == size_t(kMaxChannels * 32 * 32));
  }

  SUBCASE("family sampling is uniform per draw") {
    Rng rng(5);
    std::array<int64_t, 4> counts{0, 0, 0, 0};
    const int64_t draws = 10000;
    for (int64_t i = 0; i < draws; ++i) {
      const Family f = corpus.window_family(corpus.sample_train(rng));
      for (size_t k = 0; k < families.size(); ++k) {
        if (families[k] == f) ++counts[k];
      }
    }
    const double expected = double(draws) / 4.0;
    const double sigma = std::sqrt(double(draws) * 0.25 * 0.75);
    for (int64_t c : counts) {
      CHECK(std::abs(double(c) - expected) <= 3.0 * sigma);
    }
  }

  SUBCASE("validation split is disjoint and per-family") {
    for (Family f : families) {
      CHECK(!corpus.train_windows(f).empty());
      CHECK(!corpus.validation_windows(f).empty());
    }
  }

  SUBCASE("corpus round trips through its directory format") {
    const std::string dir =
        (std::filesystem::temp_directory_path() / "fluidfm_corpus_test").string();
    corpus.save(dir);
    Corpus loaded = Corpus::load(dir);
    CHECK(loaded.trajectories.size() == corpus.trajectories.size());
    CHECK(loaded.stats.mean == corpus.stats.mean);
    CHECK(loaded.trajectories[0].values == corpus.trajectories[0].values);
    std::filesystem::remove_all(dir);
  }

  SUBCASE("missing family raises") {
    CHECK_THROWS_AS(
        build_pretraining_corpus({Family::ReactionDiffusion, Family::ShallowWater}, cfg),
        FluidError);
  }
}
