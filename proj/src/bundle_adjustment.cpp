#include "burstdepth/bundle_adjustment.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <algorithm>
#include <cmath>

#include "burstdepth/error.hpp"

namespace burstdepth {

namespace {

using Mat23 = Eigen::Matrix<double, 2, 3>;
using Mat26 = Eigen::Matrix<double, 2, 6>;
using Mat63 = Eigen::Matrix<double, 6, 3>;
using Mat66 = Eigen::Matrix<double, 6, 6>;
using Vec6 = Eigen::Matrix<double, 6, 1>;

struct Observation {
  Eigen::Vector2d residual;
  Mat26 d_pose;   // d residual / d (r, t)
  Mat23 d_point;  // d residual / d X
  bool behind = false;
};

Eigen::Vector3d skew_cross_jacobian_row(const Eigen::Vector3d& X, int row) {
  // d (r × X) / d r = -[X]x
  switch (row) {
    case 0: return {0.0, X.z(), -X.y()};
    case 1: return {-X.z(), 0.0, X.x()};
    default: return {X.y(), -X.x(), 0.0};
  }
}

Observation observe(const CameraIntrinsics& K, const Eigen::Vector3d& r, const Eigen::Vector3d& t,
                    const Eigen::Vector3d& X, const PixelCoord& measured, bool with_jacobian) {
  Observation obs;
  const Eigen::Vector3d P = X + r.cross(X) + t;
  double z = P.z();
  bool clamped = false;
  if (z <= kMinProjectionDepth) {
    z = kMinProjectionDepth;
    clamped = true;
    obs.behind = true;
  }
  const double u = K.fx * P.x() / z + K.cx;
  const double v = K.fy * P.y() / z + K.cy;
  obs.residual = {measured.u - u, measured.v - v};
  if (!with_jacobian) return obs;

  // d projection / d P, with the depth derivative frozen when clamped.
  Mat23 dproj;
  dproj << K.fx / z, 0.0, clamped ? 0.0 : -K.fx * P.x() / (z * z),
           0.0, K.fy / z, clamped ? 0.0 : -K.fy * P.y() / (z * z);
  Eigen::Matrix3d dP_dr;
  for (int row = 0; row < 3; ++row) dP_dr.row(row) = skew_cross_jacobian_row(X, row).transpose();
  obs.d_pose.leftCols<3>() = -dproj * dP_dr;
  obs.d_pose.rightCols<3>() = -dproj;
  obs.d_point = -dproj * small_rotation_matrix(r);
  return obs;
}

Eigen::Vector3d pose_r(const Eigen::VectorXd& p, int i) { return p.segment<3>(6 * i); }
Eigen::Vector3d pose_t(const Eigen::VectorXd& p, int i) { return p.segment<3>(6 * i + 3); }
Eigen::Vector3d point_x(const Eigen::VectorXd& p, int n, int j) {
  return p.segment<3>(6 * n + 3 * j);
}

double half_squared_norm(const Eigen::VectorXd& r) { return 0.5 * r.squaredNorm(); }

}  // namespace

int BundleProblem::frame_count() const {
  return tracks.empty() ? 0 : static_cast<int>(tracks.front().positions.size());
}

void BundleProblem::validate() const {
  K.validate();
  const int n = frame_count();
  if (n < 2) throw Error(ErrorCode::kConfiguration, "bundle adjustment needs at least two frames");
  if (point_count() < std::max(1, min_points)) {
    throw Error(ErrorCode::kInsufficientTracks,
                std::to_string(point_count()) + " tracks, need " + std::to_string(min_points));
  }
  for (const FeatureTrack& t : tracks) {
    if (static_cast<int>(t.positions.size()) != n || !t.complete()) {
      throw Error(ErrorCode::kConfiguration, "bundle adjustment needs complete tracks");
    }
  }
  if (!(initial_depth > 0.0)) throw Error(ErrorCode::kConfiguration, "initial depth must be > 0");
}

Eigen::VectorXd initialize(const BundleProblem& problem) {
  const int n = problem.frame_count();
  const int m = problem.point_count();
  Eigen::VectorXd params = Eigen::VectorXd::Zero(6 * n + 3 * m);
  for (int j = 0; j < m; ++j) {
    const NormalizedCoord x = normalize(problem.K, problem.tracks[j].positions[0]);
    params.segment<3>(6 * n + 3 * j) =
        Eigen::Vector3d(x.x, x.y, 1.0) * problem.initial_depth;
  }
  return params;
}

Eigen::VectorXd residuals(const Eigen::VectorXd& params, const BundleProblem& problem) {
  const int n = problem.frame_count();
  const int m = problem.point_count();
  Eigen::VectorXd res(2 * n * m);
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector3d r = pose_r(params, i);
    const Eigen::Vector3d t = pose_t(params, i);
    for (int j = 0; j < m; ++j) {
      const Observation o =
          observe(problem.K, r, t, point_x(params, n, j), problem.tracks[j].positions[i], false);
      res.segment<2>(2 * (i * m + j)) = o.residual;
    }
  }
  return res;
}

Eigen::SparseMatrix<double> analytic_jacobian(const Eigen::VectorXd& params,
                                              const BundleProblem& problem) {
  const int n = problem.frame_count();
  const int m = problem.point_count();
  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(static_cast<std::size_t>(n) * m * 18);
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector3d r = pose_r(params, i);
    const Eigen::Vector3d t = pose_t(params, i);
    for (int j = 0; j < m; ++j) {
      const Observation o =
          observe(problem.K, r, t, point_x(params, n, j), problem.tracks[j].positions[i], true);
      const int row = 2 * (i * m + j);
      for (int a = 0; a < 2; ++a) {
        if (i > 0) {
          for (int b = 0; b < 6; ++b) entries.emplace_back(row + a, 6 * i + b, o.d_pose(a, b));
        }
        for (int b = 0; b < 3; ++b) entries.emplace_back(row + a, 6 * n + 3 * j + b, o.d_point(a, b));
      }
    }
  }
  Eigen::SparseMatrix<double> J(2 * n * m, 6 * n + 3 * m);
  J.setFromTriplets(entries.begin(), entries.end());
  return J;
}

std::vector<SmallPose> poses_from_parameters(const Eigen::VectorXd& params, int frames) {
  std::vector<SmallPose> poses(frames);
  for (int i = 0; i < frames; ++i) {
    poses[i].r = pose_r(params, i);
    poses[i].t = pose_t(params, i);
  }
  return poses;
}

std::vector<Eigen::Vector3d> points_from_parameters(const Eigen::VectorXd& params, int frames,
                                                    int points) {
  std::vector<Eigen::Vector3d> out(points);
  for (int j = 0; j < points; ++j) out[j] = point_x(params, frames, j);
  return out;
}

namespace {

// Normal equations in arrowhead form. Each observation touches one camera, so
// the camera block is block-diagonal; camera/point coupling is dense.
struct NormalEquations {
  std::vector<Mat66> camera;                  // frames 1..n-1
  std::vector<Vec6> camera_gradient;
  std::vector<Eigen::Matrix3d> point;
  std::vector<Eigen::Vector3d> point_gradient;
  std::vector<Eigen::MatrixXd> coupling;      // per point: 6(n-1) x 3
  double gradient_max = 0.0;
};

NormalEquations build_normal_equations(const Eigen::VectorXd& params, const BundleProblem& problem) {
  const int n = problem.frame_count();
  const int m = problem.point_count();
  const int nc = n - 1;
  NormalEquations ne;
  ne.camera.assign(nc, Mat66::Zero());
  ne.camera_gradient.assign(nc, Vec6::Zero());
  ne.point.assign(m, Eigen::Matrix3d::Zero());
  ne.point_gradient.assign(m, Eigen::Vector3d::Zero());
  ne.coupling.assign(m, Eigen::MatrixXd::Zero(6 * nc, 3));
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector3d r = pose_r(params, i);
    const Eigen::Vector3d t = pose_t(params, i);
    for (int j = 0; j < m; ++j) {
      const Observation o =
          observe(problem.K, r, t, point_x(params, n, j), problem.tracks[j].positions[i], true);
      ne.point[j].noalias() += o.d_point.transpose() * o.d_point;
      ne.point_gradient[j].noalias() += o.d_point.transpose() * o.residual;
      if (i == 0) continue;
      ne.camera[i - 1].noalias() += o.d_pose.transpose() * o.d_pose;
      ne.camera_gradient[i - 1].noalias() += o.d_pose.transpose() * o.residual;
      ne.coupling[j].middleRows<6>(6 * (i - 1)).noalias() += o.d_pose.transpose() * o.d_point;
    }
  }
  for (const Vec6& g : ne.camera_gradient) ne.gradient_max = std::max(ne.gradient_max, g.cwiseAbs().maxCoeff());
  for (const Eigen::Vector3d& g : ne.point_gradient) {
    ne.gradient_max = std::max(ne.gradient_max, g.cwiseAbs().maxCoeff());
  }
  return ne;
}

// Solves (H + lambda diag(H)) delta = -g through the reduced camera system.
bool solve_damped(const NormalEquations& ne, double lambda, int n, int m, Eigen::VectorXd& delta) {
  const int nc = n - 1;
  const int dim = 6 * nc;
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::VectorXd rhs(dim);
  for (int i = 0; i < nc; ++i) {
    Mat66 block = ne.camera[i];
    for (int k = 0; k < 6; ++k) block(k, k) += lambda * std::max(block(k, k), 1e-12);
    S.block<6, 6>(6 * i, 6 * i) = block;
    rhs.segment<6>(6 * i) = -ne.camera_gradient[i];
  }
  std::vector<Eigen::Matrix3d> point_inverse(m);
  for (int j = 0; j < m; ++j) {
    Eigen::Matrix3d V = ne.point[j];
    for (int k = 0; k < 3; ++k) V(k, k) += lambda * std::max(V(k, k), 1e-12);
    bool invertible = false;
    double det = 0.0;
    V.computeInverseAndDetWithCheck(point_inverse[j], det, invertible, 0.0);
    if (!invertible || !point_inverse[j].allFinite()) return false;
    if (dim == 0) continue;
    const Eigen::MatrixXd WVinv = ne.coupling[j] * point_inverse[j];
    S.noalias() -= WVinv * ne.coupling[j].transpose();
    rhs.noalias() += WVinv * ne.point_gradient[j];
  }
  delta = Eigen::VectorXd::Zero(6 * n + 3 * m);
  Eigen::VectorXd dc;
  if (dim > 0) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(S);
    if (ldlt.info() != Eigen::Success) return false;
    dc = ldlt.solve(rhs);
    if (!dc.allFinite()) return false;
    delta.segment(6, dim) = dc;
  }
  for (int j = 0; j < m; ++j) {
    Eigen::Vector3d b = -ne.point_gradient[j];
    if (dim > 0) b.noalias() -= ne.coupling[j].transpose() * dc;
    delta.segment<3>(6 * n + 3 * j) = point_inverse[j] * b;
  }
  return delta.allFinite();
}

}  // namespace

BundleSolution solve_lm(const BundleProblem& problem, const LmOptions& options) {
  problem.validate();
  const int n = problem.frame_count();
  const int m = problem.point_count();

  Eigen::VectorXd params = initialize(problem);
  double cost = half_squared_norm(residuals(params, problem));

  BundleSolution sol;
  sol.initial_cost = cost;
  double lambda = options.initial_lambda;
  int iterations = 0;
  bool converged = false;

  NormalEquations ne = build_normal_equations(params, problem);
  while (iterations < options.max_iterations) {
    if (ne.gradient_max < options.gradient_tolerance) {
      converged = true;
      break;
    }
    ++iterations;
    Eigen::VectorXd delta;
    bool accepted = false;
    if (solve_damped(ne, lambda, n, m, delta)) {
      const Eigen::VectorXd candidate = params + delta;
      const double new_cost = half_squared_norm(residuals(candidate, problem));
      if (std::isfinite(new_cost) && new_cost < cost) {
        const double relative = (cost - new_cost) / cost;
        params = candidate;
        cost = new_cost;
        sol.accepted_costs.push_back(cost);
        lambda = std::max(lambda / options.lambda_decrease, 1e-15);
        accepted = true;
        if (relative < options.relative_decrease_tolerance) {
          converged = true;
          break;
        }
        ne = build_normal_equations(params, problem);
      }
    }
    if (!accepted) {
      lambda *= options.lambda_increase;
      if (lambda > 1e16) break;
    }
  }
  if (!converged && ne.gradient_max < options.gradient_tolerance) converged = true;

  sol.iterations = iterations;
  sol.converged = converged;
  sol.final_cost = cost;
  sol.poses = poses_from_parameters(params, n);
  sol.poses[0] = SmallPose{};

  const Eigen::VectorXd res = residuals(params, problem);
  sol.final_rms_reprojection = std::sqrt(res.squaredNorm() / std::max(1, n * m));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      const Eigen::Vector3d X = point_x(params, n, j);
      const Eigen::Vector3d P = X + pose_r(params, i).cross(X) + pose_t(params, i);
      if (P.z() <= kMinProjectionDepth) ++sol.behind_camera_observations;
    }
  }
  for (int j = 0; j < m; ++j) {
    const Eigen::Vector3d X = point_x(params, n, j);
    if (X.z() > 0.0) {
      sol.points.push_back(X);
      sol.point_ids.push_back(j);
    } else {
      sol.dropped_points.push_back(j);
    }
  }
  return sol;
}

}  // namespace burstdepth
