#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "burstdepth/error.hpp"
#include "burstdepth/propagation.hpp"
#include "oracles.hpp"

using namespace burstdepth;

namespace {

std::vector<double> seed_grid(int w, int h, const std::vector<DepthSeed>& seeds) {
  std::vector<double> out(std::size_t(w) * h, std::numeric_limits<double>::quiet_NaN());
  for (const auto& s : seeds) {
    out[std::size_t(std::lround(s.position.v)) * w + std::lround(s.position.u)] = s.inverse_depth;
  }
  return out;
}

}  // namespace

TEST(Propagation, ConstantSeedsOnConstantImage) {
  const Image guide(20, 15, 3, 0.4f);
  const std::vector<DepthSeed> seeds{{{3, 3}, 0.25}, {{15, 10}, 0.25}, {{8, 12}, 0.25}};
  const PropagationResult r = propagate(seeds, guide);
  for (std::size_t i = 0; i < r.depth.size(); ++i) {
    ASSERT_TRUE(r.depth.valid[i]);
    EXPECT_NEAR(r.depth.data[i], 0.25, 1e-7);
  }
  EXPECT_EQ(r.unseeded_components, 0);
}

TEST(Propagation, MatchesDenseSolve) {
  std::mt19937 rng(8);
  std::uniform_real_distribution<float> u(0, 1);
  for (int trial = 0; trial < 3; ++trial) {
    const int w = 16 + 8 * trial, h = 12 + 6 * trial;
    Image guide = oracle::sinusoid_texture(w, h, trial);
    std::vector<DepthSeed> seeds;
    for (int k = 0; k < 12; ++k) {
      seeds.push_back({{double(rng() % w), double(rng() % h)}, 0.2 + 0.3 * u(rng)});
    }
    PropagationConfig cfg;
    cfg.tolerance = 1e-12;
    // Duplicate pixels would double-anchor; keep one seed per pixel.
    const std::vector<double> grid = seed_grid(w, h, seeds);
    std::vector<DepthSeed> unique;
    for (int i = 0; i < w * h; ++i) {
      if (!std::isnan(grid[i])) unique.push_back({{double(i % w), double(i / w)}, grid[i]});
    }
    const PropagationResult r2 = propagate(unique, guide, cfg);
    const auto expected = oracle::dense_propagation(guide, grid, cfg.c1, cfg.c2, cfg.sigma_c);
    for (int i = 0; i < w * h; ++i) EXPECT_NEAR(r2.depth.data[i], expected[i], 1e-6) << i;
  }
}

TEST(Propagation, StaysWithinSeedRange) {
  const Image guide = oracle::sinusoid_texture(40, 30);
  std::mt19937 rng(2);
  std::vector<DepthSeed> seeds;
  double lo = 1e9, hi = -1e9;
  for (int k = 0; k < 25; ++k) {
    const double v = 0.1 + 0.01 * (rng() % 50);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    seeds.push_back({{double(rng() % 40), double(rng() % 30)}, v});
  }
  const PropagationResult r = propagate(seeds, guide);
  for (double v : r.depth.data) {
    EXPECT_GE(v, lo - 1e-6);
    EXPECT_LE(v, hi + 1e-6);
  }
}

TEST(Propagation, EdgeStopsDiffusion) {
  Image guide(30, 20, 1, 0.1f);
  for (int y = 0; y < 20; ++y) {
    for (int x = 15; x < 30; ++x) guide.at(x, y) = 0.9f;
  }
  const std::vector<DepthSeed> seeds{{{5, 10}, 0.5}, {{25, 10}, 0.25}};
  const PropagationResult r = propagate(seeds, guide);
  for (int y = 0; y < 20; ++y) {
    EXPECT_NEAR(r.depth.data[r.depth.index(0, y)], 0.5, 5e-3);
    EXPECT_NEAR(r.depth.data[r.depth.index(14, y)], 0.5, 5e-3);
    EXPECT_NEAR(r.depth.data[r.depth.index(15, y)], 0.25, 5e-3);
    EXPECT_NEAR(r.depth.data[r.depth.index(29, y)], 0.25, 5e-3);
  }
}

TEST(Propagation, UnseededRegionFilledFromNearestSeed) {
  // A bright square fully cut off from the background by a large contrast.
  Image guide(30, 30, 1, 0.0f);
  for (int y = 10; y < 20; ++y) {
    for (int x = 10; x < 20; ++x) guide.at(x, y) = 1.0f;
  }
  PropagationConfig cfg;
  cfg.sigma_c = 0.05;
  cfg.min_affinity = 1e-6;
  const std::vector<DepthSeed> seeds{{{2, 2}, 0.3}};
  const PropagationResult r = propagate(seeds, guide, cfg);
  EXPECT_EQ(r.unseeded_components, 1);
  EXPECT_TRUE(r.filled_from_nearest[r.depth.index(15, 15)]);
  EXPECT_FALSE(r.filled_from_nearest[r.depth.index(2, 2)]);
  EXPECT_NEAR(r.depth.data[r.depth.index(15, 15)], 0.3, 1e-9);
}

TEST(Propagation, SeedOrderDoesNotMatter) {
  const Image guide = oracle::sinusoid_texture(32, 24, 1.0);
  std::vector<DepthSeed> seeds;
  for (int k = 0; k < 20; ++k) seeds.push_back({{1.0 + 1.5 * k, 2.0 + k}, 0.1 + 0.02 * k});
  const PropagationResult a = propagate(seeds, guide);
  std::reverse(seeds.begin(), seeds.end());
  const PropagationResult b = propagate(seeds, guide);
  for (std::size_t i = 0; i < a.depth.size(); ++i) EXPECT_NEAR(a.depth.data[i], b.depth.data[i], 1e-9);
}

TEST(Propagation, EightNeighbourhoodStillInterpolates) {
  PropagationConfig cfg;
  cfg.neighborhood = 8;
  const PropagationResult r = propagate(std::vector<DepthSeed>{{{0, 0}, 0.2}, {{19, 0}, 0.4}}, Image(20, 1, 1, 0.5f), cfg);
  for (int x = 1; x < 20; ++x) EXPECT_GE(r.depth.data[x], r.depth.data[x - 1] - 1e-12);
}

TEST(Propagation, NoSeedsThrows) {
  try {
    propagate(std::vector<DepthSeed>{{{-5, -5}, 0.3}}, Image(10, 10, 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNoSeeds);
  }
}

TEST(Propagation, InvalidConfigThrows) {
  PropagationConfig cfg;
  cfg.neighborhood = 6;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.sigma_c = 0;
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(InitialFlow, ScalesTransform) {
  InverseDepthMap w(3, 2, 0.5);
  w.invalidate(1);
  const FlowField f = initial_flow_for_frame(w, {2, -4});
  EXPECT_DOUBLE_EQ(f.du(0), 1.0);
  EXPECT_DOUBLE_EQ(f.dv(0), -2.0);
  EXPECT_FALSE(f.valid[1]);
}
