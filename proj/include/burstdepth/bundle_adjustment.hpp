#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <vector>

#include "burstdepth/geometry.hpp"
#include "burstdepth/tracking.hpp"

namespace burstdepth {

/// Depth assigned to every point at initialization. Deterministic on purpose.
inline constexpr double kInitialPointDepth = 100.0;
/// Depths at or below this are clamped when projecting.
inline constexpr double kMinProjectionDepth = 1e-6;

/// m complete tracks over n frames; frame 0 is the reference with its pose
/// pinned to zero.
struct BundleProblem {
  CameraIntrinsics K;
  std::vector<FeatureTrack> tracks;
  double initial_depth = kInitialPointDepth;
  int min_points = 1;

  int frame_count() const;
  int point_count() const { return static_cast<int>(tracks.size()); }
  /// Parameter layout: 6 per frame (r then t), then 3 per point.
  int parameter_count() const { return 6 * frame_count() + 3 * point_count(); }
  int residual_count() const { return 2 * frame_count() * point_count(); }
  void validate() const;
};

struct LmOptions {
  int max_iterations = 200;
  double gradient_tolerance = 1e-10;
  double relative_decrease_tolerance = 1e-12;
  double initial_lambda = 1e-3;
  double lambda_increase = 10.0;
  double lambda_decrease = 10.0;
};

struct BundleSolution {
  std::vector<SmallPose> poses;           // poses[0] is exactly zero
  std::vector<Eigen::Vector3d> points;    // retained points, all with z > 0
  std::vector<int> point_ids;             // track index of each retained point
  std::vector<int> dropped_points;        // track indices driven to z <= 0
  double final_rms_reprojection = 0.0;    // pixels, over all observations
  double initial_cost = 0.0;
  double final_cost = 0.0;
  std::vector<double> accepted_costs;     // cost after every accepted step
  int iterations = 0;
  int behind_camera_observations = 0;
  bool converged = false;
};

/// Zero poses; X_j = x_1j * initial_depth from the reference observation.
Eigen::VectorXd initialize(const BundleProblem& problem);

/// u_ij - <K [R_i | t_i] [X_j; 1]>, ordered frame-major: entry 2 (i m + j).
Eigen::VectorXd residuals(const Eigen::VectorXd& params, const BundleProblem& problem);

/// d residuals / d params. Columns of the reference pose are empty.
Eigen::SparseMatrix<double> analytic_jacobian(const Eigen::VectorXd& params,
                                              const BundleProblem& problem);

BundleSolution solve_lm(const BundleProblem& problem, const LmOptions& options = {});

/// Unpack a parameter vector into per-frame poses and per-point positions.
std::vector<SmallPose> poses_from_parameters(const Eigen::VectorXd& params, int frames);
std::vector<Eigen::Vector3d> points_from_parameters(const Eigen::VectorXd& params, int frames,
                                                    int points);

}  // namespace burstdepth
