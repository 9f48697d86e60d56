#include "burstdepth/geometry.hpp"

#include <limits>

#include "burstdepth/error.hpp"

namespace burstdepth {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void require_nondegenerate(const TransformVector& T, double eps) {
  if (T.degenerate(eps)) {
    throw Error(ErrorCode::kDegenerateBaseline,
                "transform vector norm " + std::to_string(T.norm()) + " is below " +
                    std::to_string(eps));
  }
}
}  // namespace

Eigen::Matrix3d CameraIntrinsics::matrix() const {
  Eigen::Matrix3d K;
  K << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return K;
}

void CameraIntrinsics::validate() const {
  if (!valid()) throw Error(ErrorCode::kConfiguration, "camera intrinsics need fx, fy > 0");
}

FlowField::FlowField(int w, int h)
    : width(w), height(h), data(2 * static_cast<std::size_t>(w) * h, 0.0),
      valid(static_cast<std::size_t>(w) * h, 1) {}

FlowField FlowField::constant(int w, int h, double du, double dv) {
  FlowField f(w, h);
  for (std::size_t i = 0; i < f.size(); ++i) f.set(i, du, dv);
  return f;
}

void FlowField::invalidate(std::size_t i) {
  data[2 * i] = kNaN;
  data[2 * i + 1] = kNaN;
  valid[i] = 0;
}

InverseDepthMap::InverseDepthMap(int w, int h, double fill)
    : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill),
      valid(static_cast<std::size_t>(w) * h, 1) {}

void InverseDepthMap::invalidate(std::size_t i) {
  data[i] = kNaN;
  valid[i] = 0;
}

Eigen::Vector2d project(const Eigen::Vector3d& point) {
  if (point.z() == 0.0) {
    throw Error(ErrorCode::kDegenerateProjection, "cannot project a point with zero depth");
  }
  return {point.x() / point.z(), point.y() / point.z()};
}

Eigen::Matrix3d small_rotation_matrix(const Eigen::Vector3d& r) {
  Eigen::Matrix3d R;
  R << 1.0, -r.z(), r.y(),
       r.z(), 1.0, -r.x(),
       -r.y(), r.x(), 1.0;
  return R;
}

NormalizedCoord normalize(const CameraIntrinsics& K, const PixelCoord& p) {
  return {(p.u - K.cx) / K.fx, (p.v - K.cy) / K.fy};
}

PixelCoord denormalize(const CameraIntrinsics& K, const NormalizedCoord& x) {
  return {K.fx * x.x + K.cx, K.fy * x.y + K.cy};
}

PixelCoord rotate_pixel(const CameraIntrinsics& K, const Eigen::Vector3d& r, double u, double v) {
  const Eigen::Vector3d x((u - K.cx) / K.fx, (v - K.cy) / K.fy, 1.0);
  // R x = x + r × x; expressed as an offset so that r = 0 is bit-exact.
  const Eigen::Vector3d y = x + r.cross(x);
  if (y.z() == 0.0) {
    throw Error(ErrorCode::kDegenerateProjection, "rotated ray is parallel to the image plane");
  }
  return {u + K.fx * (y.x() / y.z() - x.x()), v + K.fy * (y.y() / y.z() - x.y())};
}

MaskedImage rotation_align_warp(const Image& image, const CameraIntrinsics& K,
                                const Eigen::Vector3d& r) {
  K.validate();
  const int w = image.width();
  const int h = image.height();
  MaskedImage out{Image(w, h, image.channels()), Mask(image.pixel_count(), 0)};
  const int nc = image.channels();
  auto dst = out.image.pixels();
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      const Eigen::Vector3d ray((x - K.cx) / K.fx, (y - K.cy) / K.fy, 1.0);
      const double depth = ray.z() + r.x() * ray.y() - r.y() * ray.x();
      if (depth <= 0.0) continue;
      const PixelCoord src = rotate_pixel(K, r, x, y);
      if (sample_bicubic(image, src.u, src.v, dst.subspan(i * nc, nc))) out.valid[i] = 1;
    }
  }
  return out;
}

TransformVector translation_transform_vector(const CameraIntrinsics& K, const Eigen::Vector3d& t) {
  return {K.fx * t.x() + K.cx * t.z(), K.fy * t.y() + K.cy * t.z()};
}

FlowField flow_from_inverse_depth(const InverseDepthMap& w, const TransformVector& T) {
  FlowField flow(w.width, w.height);
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w.valid[i]) {
      flow.set(i, w.data[i] * T.tx, w.data[i] * T.ty);
    } else {
      flow.invalidate(i);
    }
  }
  return flow;
}

InverseDepthMap inverse_depth_from_flow(const FlowField& flow, const TransformVector& T,
                                        double eps) {
  require_nondegenerate(T, eps);
  const double n2 = T.squared_norm();
  InverseDepthMap w(flow.width, flow.height);
  for (std::size_t i = 0; i < flow.size(); ++i) {
    if (!flow.valid[i]) {
      w.invalidate(i);
      continue;
    }
    const double value = (T.tx * flow.du(i) + T.ty * flow.dv(i)) / n2;
    w.data[i] = value > 0.0 ? value : 0.0;
  }
  return w;
}

FlowField convert_flow_between_frames(const FlowField& v_prev, const TransformVector& T_prev,
                                      const TransformVector& T_next, double eps) {
  require_nondegenerate(T_prev, eps);
  const double n2 = T_prev.squared_norm();
  FlowField out(v_prev.width, v_prev.height);
  for (std::size_t i = 0; i < v_prev.size(); ++i) {
    if (!v_prev.valid[i]) {
      out.invalidate(i);
      continue;
    }
    const double s = (T_prev.tx * v_prev.du(i) + T_prev.ty * v_prev.dv(i)) / n2;
    out.set(i, T_next.tx * s, T_next.ty * s);
  }
  return out;
}

}  // namespace burstdepth
