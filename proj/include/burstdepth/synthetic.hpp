#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <vector>

#include "burstdepth/bundle_adjustment.hpp"
#include "burstdepth/geometry.hpp"
#include "burstdepth/image.hpp"

namespace burstdepth {

/// Smooth colored value noise: two octaves of cubic B-spline interpolated
/// lattice values. `cell` is the coarse lattice spacing in texture units.
/// Values stay in (0, 1).
std::array<float, 3> procedural_texture(double x, double y, double cell, std::uint64_t seed);

/// Fronto-parallel textured plane at depth `depth`. Its extent is given in
/// reference-view pixels; an empty extent means unbounded.
struct ScenePlane {
  double depth = 1.0;
  double u0 = 0.0, v0 = 0.0, u1 = 0.0, v1 = 0.0;
  std::uint64_t texture_seed = 0;

  bool bounded() const { return u1 > u0 && v1 > v0; }
};

struct SceneOptions {
  int width = 640;
  int height = 480;
  CameraIntrinsics K{520.0, 520.0, 319.5, 239.5};
  int frames = 28;
  double far_depth = 4.0;
  double near_depth = 2.0;
  double near_u0 = 100.0, near_v0 = 80.0, near_u1 = 380.0, near_v1 = 400.0;
  double max_translation = 0.04;  // scene units
  double max_rotation = 0.005;    // radians
  /// z translation as a fraction of the largest in-plane translation.
  double tz_fraction = 0.01;
  double texture_cell = 5.0;      // pixels at the plane's depth
  int exposure_levels = 1;
  double noise_sigma = 0.0;
  std::uint64_t seed = 7;
};

struct SyntheticScene {
  int width = 0;
  int height = 0;
  CameraIntrinsics K;
  std::vector<ScenePlane> planes;   // sorted near to far
  std::vector<SmallPose> poses;     // poses[0] is zero
  std::vector<double> gains;        // per-frame exposure gain
  double noise_sigma = 0.0;
  double texture_cell = 5.0;
  std::uint64_t seed = 0;

  double max_depth() const;
  double min_depth() const;
  /// Throws kConfiguration outside the small-motion regime.
  void validate() const;
};

/// Two planes (near rectangle in front of an unbounded far plane) seen by a
/// smooth hand-shake trajectory.
SyntheticScene make_default_scene(const SceneOptions& opt = {});

/// Gains 2^linspace(-1, 1, levels), cycled over the frames. levels <= 1 gives 1.
std::vector<double> exposure_ramp(int levels, int frames);

struct RenderedBurst {
  std::vector<Image> frames;       // 8-bit quantized, in [0, 1]
  std::vector<Image> clean_frames; // before exposure clipping noise and quantization, gain applied
  Image depth;                     // reference-view depth, 1 channel
  std::vector<FlowField> flows;    // reference pixel -> frame i position
  /// Same as `flows` but into the rotation-aligned frame i.
  std::vector<FlowField> aligned_flows;
};

RenderedBurst render(const SyntheticScene& scene);

/// Depth along the reference ray through (u, v); +inf when no plane is hit.
double scene_depth_at(const SyntheticScene& scene, double u, double v);

struct SyntheticBundleOptions {
  int frames = 10;
  int points = 300;
  double min_depth = 2.0;
  double max_depth = 4.0;
  double max_rotation = 0.01;            // radians per axis bound on |r|
  double max_translation_ratio = 0.02;   // of min depth
  double pixel_noise = 0.0;
  int width = 640;
  int height = 480;
  CameraIntrinsics K{520.0, 520.0, 319.5, 239.5};
};

struct SyntheticBundle {
  BundleProblem problem;
  std::vector<SmallPose> poses;
  std::vector<Eigen::Vector3d> points;
};

/// Random points in front of the reference camera projected through random
/// small poses with the linearized model.
SyntheticBundle make_synthetic_bundle(const SyntheticBundleOptions& opt, std::uint64_t seed);

}  // namespace burstdepth
