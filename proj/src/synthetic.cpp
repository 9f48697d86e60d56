#include "burstdepth/synthetic.hpp"

#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "burstdepth/applications.hpp"
#include "burstdepth/error.hpp"

namespace burstdepth {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double lattice_value(std::int64_t ix, std::int64_t iy, std::uint64_t seed) {
  std::uint64_t h = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(ix) * 0x632be59bd9b4e019ULL +
                                                 static_cast<std::uint64_t>(iy)));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

void bspline_weights(double t, double w[4]) {
  const double t2 = t * t;
  const double t3 = t2 * t;
  w[0] = (1.0 - t) * (1.0 - t) * (1.0 - t) / 6.0;
  w[1] = (3.0 * t3 - 6.0 * t2 + 4.0) / 6.0;
  w[2] = (-3.0 * t3 + 3.0 * t2 + 3.0 * t + 1.0) / 6.0;
  w[3] = t3 / 6.0;
}

double value_noise(double x, double y, std::uint64_t seed) {
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  double wx[4];
  double wy[4];
  bspline_weights(x - fx, wx);
  bspline_weights(y - fy, wy);
  const auto ix = static_cast<std::int64_t>(fx);
  const auto iy = static_cast<std::int64_t>(fy);
  double sum = 0.0;
  for (int j = 0; j < 4; ++j) {
    double row = 0.0;
    for (int i = 0; i < 4; ++i) row += wx[i] * lattice_value(ix + i - 1, iy + j - 1, seed);
    sum += wy[j] * row;
  }
  return sum;
}

}  // namespace

std::array<float, 3> procedural_texture(double x, double y, double cell, std::uint64_t seed) {
  auto octaves = [&](std::uint64_t s) {
    return 0.6 * value_noise(x / cell, y / cell, s) +
           0.4 * value_noise(2.0 * x / cell, 2.0 * y / cell, splitmix64(s));
  };
  const double shared = octaves(seed);
  std::array<float, 3> rgb{};
  for (int c = 0; c < 3; ++c) {
    const double tint = octaves(splitmix64(seed + 1 + c));
    const double v = 0.35 + 1.0 * (shared - 0.5) + 0.3 * (tint - 0.5);
    rgb[c] = static_cast<float>(std::clamp(v, 0.02, 0.98));
  }
  return rgb;
}

double SyntheticScene::max_depth() const {
  double d = 0.0;
  for (const ScenePlane& p : planes) d = std::max(d, p.depth);
  return d;
}

double SyntheticScene::min_depth() const {
  double d = std::numeric_limits<double>::infinity();
  for (const ScenePlane& p : planes) d = std::min(d, p.depth);
  return d;
}

void SyntheticScene::validate() const {
  K.validate();
  if (width <= 0 || height <= 0) throw Error(ErrorCode::kConfiguration, "scene size must be positive");
  if (planes.empty()) throw Error(ErrorCode::kConfiguration, "scene has no planes");
  for (const ScenePlane& p : planes) {
    if (!(p.depth > 0.0)) throw Error(ErrorCode::kConfiguration, "plane depths must be > 0");
  }
  if (poses.empty() || !poses.front().is_zero()) {
    throw Error(ErrorCode::kConfiguration, "the first pose must be the zero reference pose");
  }
  if (gains.size() != poses.size()) throw Error(ErrorCode::kConfiguration, "one gain per frame");
  for (const SmallPose& pose : poses) {
    if (pose.r.norm() > 0.05 + 1e-12 || pose.t.norm() > 0.05 * min_depth() + 1e-12) {
      throw Error(ErrorCode::kConfiguration, "trajectory leaves the small-motion regime");
    }
  }
  if (noise_sigma < 0.0) throw Error(ErrorCode::kConfiguration, "noise sigma must be >= 0");
}

std::vector<double> exposure_ramp(int levels, int frames) {
  std::vector<double> gains(std::max(frames, 0), 1.0);
  if (levels <= 1) return gains;
  for (int k = 0; k < frames; ++k) {
    const int level = k % levels;
    gains[k] = std::exp2(-1.0 + 2.0 * level / (levels - 1));
  }
  return gains;
}

SyntheticScene make_default_scene(const SceneOptions& opt) {
  if (opt.frames < 2) throw Error(ErrorCode::kConfiguration, "a burst needs at least 2 frames");
  SyntheticScene scene;
  scene.width = opt.width;
  scene.height = opt.height;
  scene.K = opt.K;
  scene.noise_sigma = opt.noise_sigma;
  scene.texture_cell = opt.texture_cell;
  scene.seed = opt.seed;
  scene.planes.push_back({opt.near_depth, opt.near_u0, opt.near_v0, opt.near_u1, opt.near_v1,
                          splitmix64(opt.seed ^ 0x1111)});
  scene.planes.push_back({opt.far_depth, 0, 0, 0, 0, splitmix64(opt.seed ^ 0x2222)});
  std::sort(scene.planes.begin(), scene.planes.end(),
            [](const ScenePlane& a, const ScenePlane& b) { return a.depth < b.depth; });

  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> freq(0.7, 1.6);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  auto wave = [&]() {
    const double f = freq(rng);
    const double p = phase(rng);
    return [f, p](double s) { return std::sin(2.0 * std::numbers::pi * f * s + p) - std::sin(p); };
  };
  const auto tx = wave(), ty = wave(), tz = wave(), rx = wave(), ry = wave(), rz = wave();
  scene.poses.resize(opt.frames);
  double max_t = 0.0, max_tz = 0.0, max_r = 0.0;
  for (int k = 1; k < opt.frames; ++k) {
    const double s = static_cast<double>(k) / (opt.frames - 1);
    SmallPose& pose = scene.poses[k];
    pose.t = {tx(s), ty(s), tz(s)};
    pose.r = {rx(s), ry(s), rz(s)};
    max_t = std::max(max_t, std::hypot(pose.t.x(), pose.t.y()));
    max_tz = std::max(max_tz, std::abs(pose.t.z()));
    max_r = std::max(max_r, pose.r.norm());
  }
  for (int k = 1; k < opt.frames; ++k) {
    SmallPose& pose = scene.poses[k];
    if (max_t > 0.0) {
      pose.t.x() *= opt.max_translation / max_t;
      pose.t.y() *= opt.max_translation / max_t;
    }
    pose.t.z() = max_tz > 0.0 ? pose.t.z() * opt.tz_fraction * opt.max_translation / max_tz : 0.0;
    pose.r = max_r > 0.0 ? Eigen::Vector3d(pose.r * (opt.max_rotation / max_r)) : Eigen::Vector3d::Zero();
  }
  scene.gains = exposure_ramp(opt.exposure_levels, opt.frames);
  scene.validate();
  return scene;
}

namespace {

Eigen::Vector3d reference_point(const SyntheticScene& scene, double u, double v, double* depth) {
  const Eigen::Vector3d ray((u - scene.K.cx) / scene.K.fx, (v - scene.K.cy) / scene.K.fy, 1.0);
  for (const ScenePlane& p : scene.planes) {
    if (!p.bounded() || (u >= p.u0 && u < p.u1 && v >= p.v0 && v < p.v1)) {
      *depth = p.depth;
      return ray * p.depth;
    }
  }
  *depth = std::numeric_limits<double>::infinity();
  return Eigen::Vector3d::Constant(std::numeric_limits<double>::quiet_NaN());
}

}  // namespace

double scene_depth_at(const SyntheticScene& scene, double u, double v) {
  double depth = 0.0;
  reference_point(scene, u, v, &depth);
  return depth;
}

RenderedBurst render(const SyntheticScene& scene) {
  scene.validate();
  const int w = scene.width;
  const int h = scene.height;
  const CameraIntrinsics& K = scene.K;
  const int n = static_cast<int>(scene.poses.size());
  RenderedBurst out;
  out.frames.resize(n);
  out.clean_frames.resize(n);
  out.flows.assign(n, FlowField(w, h));
  out.aligned_flows.assign(n, FlowField(w, h));
  out.depth = Image(w, h, 1);

  std::vector<Eigen::Vector3d> ref_points(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double depth = 0.0;
      ref_points[std::size_t(y) * w + x] = reference_point(scene, x, y, &depth);
      out.depth.at(x, y) = static_cast<float>(depth);
    }
  }

  for (int k = 0; k < n; ++k) {
    const SmallPose& pose = scene.poses[k];
    const Eigen::Matrix3d R = small_rotation_matrix(pose.r);
    const Eigen::Matrix3d R_inv = R.inverse();
    const Eigen::Vector3d back_t = R_inv * pose.t;
    Image clean(w, h, 3);
#pragma omp parallel for schedule(static)
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const Eigen::Vector3d ray((x - K.cx) / K.fx, (y - K.cy) / K.fy, 1.0);
        const Eigen::Vector3d dir = R_inv * ray;
        std::array<float, 3> rgb{0.0f, 0.0f, 0.0f};
        for (const ScenePlane& p : scene.planes) {
          // World point R^-1 (lambda ray - t) on the plane Z = depth.
          const double lambda = (p.depth + back_t.z()) / dir.z();
          const Eigen::Vector3d X = lambda * dir - back_t;
          const double u_ref = K.fx * X.x() / X.z() + K.cx;
          const double v_ref = K.fy * X.y() / X.z() + K.cy;
          if (p.bounded() && !(u_ref >= p.u0 && u_ref < p.u1 && v_ref >= p.v0 && v_ref < p.v1)) continue;
          rgb = procedural_texture(u_ref, v_ref, scene.texture_cell, p.texture_seed);
          break;
        }
        for (int c = 0; c < 3; ++c) {
          clean.at(x, y, c) = std::clamp(static_cast<float>(scene.gains[k] * rgb[c]), 0.0f, 1.0f);
        }
      }
    }
    Image noisy = add_signal_dependent_noise(clean, scene.noise_sigma, scene.seed * 1000003ULL + k);
    for (float& v : noisy.pixels()) v = std::round(std::clamp(v, 0.0f, 1.0f) * 255.0f) / 255.0f;
    out.frames[k] = std::move(noisy);
    out.clean_frames[k] = std::move(clean);

    FlowField& flow = out.flows[k];
    FlowField& aligned = out.aligned_flows[k];
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t i = std::size_t(y) * w + x;
        const Eigen::Vector3d& X = ref_points[i];
        if (!X.allFinite()) {
          flow.invalidate(i);
          aligned.invalidate(i);
          continue;
        }
        const Eigen::Vector3d Xk = R * X + pose.t;
        const Eigen::Vector3d Xa = X + back_t;
        flow.set(i, K.fx * Xk.x() / Xk.z() + K.cx - x, K.fy * Xk.y() / Xk.z() + K.cy - y);
        aligned.set(i, K.fx * Xa.x() / Xa.z() + K.cx - x, K.fy * Xa.y() / Xa.z() + K.cy - y);
      }
    }
  }
  return out;
}

SyntheticBundle make_synthetic_bundle(const SyntheticBundleOptions& opt, std::uint64_t seed) {
  opt.K.validate();
  if (opt.frames < 2 || opt.points < 1) {
    throw Error(ErrorCode::kConfiguration, "synthetic bundle needs >= 2 frames and >= 1 point");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> u_dist(10.0, opt.width - 10.0);
  std::uniform_real_distribution<double> v_dist(10.0, opt.height - 10.0);
  std::uniform_real_distribution<double> depth_dist(opt.min_depth, opt.max_depth);
  std::uniform_real_distribution<double> length(0.2, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);

  SyntheticBundle b;
  b.problem.K = opt.K;
  b.poses.resize(opt.frames);
  for (int i = 1; i < opt.frames; ++i) {
    Eigen::Vector3d r(unit(rng), unit(rng), unit(rng));
    r *= opt.max_rotation / std::sqrt(3.0);
    Eigen::Vector3d t(unit(rng), unit(rng), unit(rng));
    if (t.norm() > 0.0) t.normalize();
    t *= length(rng) * opt.max_translation_ratio * opt.min_depth;
    b.poses[i] = {r, t};
  }
  const CameraIntrinsics& K = opt.K;
  for (int j = 0; j < opt.points; ++j) {
    const double u = u_dist(rng);
    const double v = v_dist(rng);
    const double z = depth_dist(rng);
    const Eigen::Vector3d X((u - K.cx) / K.fx * z, (v - K.cy) / K.fy * z, z);
    b.points.push_back(X);
    FeatureTrack track;
    for (int i = 0; i < opt.frames; ++i) {
      const SmallPose& pose = b.poses[i];
      const Eigen::Vector3d Xi = X + pose.r.cross(X) + pose.t;
      PixelCoord p{K.fx * Xi.x() / Xi.z() + K.cx, K.fy * Xi.y() / Xi.z() + K.cy};
      if (opt.pixel_noise > 0.0) {
        p.u += opt.pixel_noise * noise(rng);
        p.v += opt.pixel_noise * noise(rng);
      }
      track.positions.push_back(p);
      track.tracked.push_back(1);
    }
    track.ref_position = track.positions[0];
    b.problem.tracks.push_back(std::move(track));
  }
  return b;
}

}  // namespace burstdepth
