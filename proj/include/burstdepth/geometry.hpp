#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cmath>
#include <vector>

#include "burstdepth/image.hpp"

namespace burstdepth {

/// Below this norm (pixels x scene units) a transform vector carries no
/// usable parallax and the frame is skipped.
inline constexpr double kMinBaseline = 1e-6;

struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;

  bool valid() const noexcept {
    return fx > 0.0 && fy > 0.0 && std::isfinite(fx) && std::isfinite(fy) && std::isfinite(cx) &&
           std::isfinite(cy);
  }
  Eigen::Matrix3d matrix() const;
  /// Throws kConfiguration when not valid().
  void validate() const;
};

/// Linearized camera motion: rotation r (radians, small-angle) and
/// translation t (scene units). The reference frame's pose is all zeros.
struct SmallPose {
  Eigen::Vector3d r = Eigen::Vector3d::Zero();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();

  bool is_zero() const { return r.isZero(0.0) && t.isZero(0.0); }
};

struct PixelCoord {
  double u = 0.0;
  double v = 0.0;
};

struct NormalizedCoord {
  double x = 0.0;
  double y = 0.0;
};

/// The 2-vector mapping inverse depth to optical flow for one frame.
struct TransformVector {
  double tx = 0.0;
  double ty = 0.0;

  double norm() const { return std::hypot(tx, ty); }
  double squared_norm() const { return tx * tx + ty * ty; }
  bool degenerate(double eps = kMinBaseline) const { return !(norm() >= eps); }
};

/// Per-pixel 2-vector flow in pixels. Masked pixels hold NaN in both
/// components and valid == 0.
struct FlowField {
  int width = 0;
  int height = 0;
  std::vector<double> data;  // interleaved (du, dv)
  Mask valid;

  FlowField() = default;
  FlowField(int w, int h);  // all-valid zero flow
  static FlowField constant(int w, int h, double du, double dv);

  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
  double du(std::size_t i) const { return data[2 * i]; }
  double dv(std::size_t i) const { return data[2 * i + 1]; }
  void set(std::size_t i, double du, double dv) {
    data[2 * i] = du;
    data[2 * i + 1] = dv;
    valid[i] = 1;
  }
  void invalidate(std::size_t i);
  std::size_t size() const { return valid.size(); }
};

/// Per-pixel inverse depth w = 1/z. Masked pixels hold NaN; valid pixels are
/// clamped to w >= 0 on construction from flow.
struct InverseDepthMap {
  int width = 0;
  int height = 0;
  std::vector<double> data;
  Mask valid;

  InverseDepthMap() = default;
  InverseDepthMap(int w, int h, double fill = 0.0);

  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
  void invalidate(std::size_t i);
  std::size_t size() const { return valid.size(); }
};

/// Perspective division <[a, b, c]> = [a/c, b/c]. Throws kDegenerateProjection
/// when c == 0.
Eigen::Vector2d project(const Eigen::Vector3d& point);

/// First-order rotation I + [r]x.
Eigen::Matrix3d small_rotation_matrix(const Eigen::Vector3d& r);

NormalizedCoord normalize(const CameraIntrinsics& K, const PixelCoord& p);
PixelCoord denormalize(const CameraIntrinsics& K, const NormalizedCoord& x);

/// Pixel position where reference pixel (u, v) lands after rotating the
/// optical axis by r, i.e. <K R(r) K^-1 [u, v, 1]>. Exact identity for r = 0.
PixelCoord rotate_pixel(const CameraIntrinsics& K, const Eigen::Vector3d& r, double u, double v);

/// Resample `image` so its optical axis is aligned with the reference frame.
/// Samples are bicubic; sources outside the frame are masked.
MaskedImage rotation_align_warp(const Image& image, const CameraIntrinsics& K,
                                const Eigen::Vector3d& r);

TransformVector translation_transform_vector(const CameraIntrinsics& K, const Eigen::Vector3d& t);

FlowField flow_from_inverse_depth(const InverseDepthMap& w, const TransformVector& T);

/// Least-squares projection of each flow vector onto T. Negative results are
/// clamped to 0. Throws kDegenerateBaseline when |T| < eps.
InverseDepthMap inverse_depth_from_flow(const FlowField& flow, const TransformVector& T,
                                        double eps = kMinBaseline);

/// v' = T_next T_prev^+ v_prev.
FlowField convert_flow_between_frames(const FlowField& v_prev, const TransformVector& T_prev,
                                      const TransformVector& T_next, double eps = kMinBaseline);

}  // namespace burstdepth
