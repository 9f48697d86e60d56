#pragma once

// Independent reference implementations used to check the library. None of
// these call into the code under test beyond plain data types.

#include <Eigen/Core>
#include <functional>
#include <vector>

#include "burstdepth/geometry.hpp"
#include "burstdepth/image.hpp"
#include "burstdepth/network.hpp"

namespace oracle {

using burstdepth::CameraIntrinsics;
using burstdepth::Image;

/// exp([r]x) by Rodrigues' formula.
Eigen::Matrix3d rotation_exp(const Eigen::Vector3d& r);

/// The linearized rotation written out element by element.
Eigen::Matrix3d linear_rotation(const Eigen::Vector3d& r);

/// <K (R(r) X + t)> with the linearized rotation.
Eigen::Vector2d project_point(const CameraIntrinsics& K, const Eigen::Vector3d& r, const Eigen::Vector3d& t,
                              const Eigen::Vector3d& X);

/// Keys (a = -0.5) bicubic sample with replicated borders, one channel.
double keys_bicubic(const Image& img, double x, double y, int c);

/// Per-pixel resampling at <K R K^-1 u>; NaN where the source is outside.
std::vector<double> rotation_resample(const Image& img, const CameraIntrinsics& K, const Eigen::Vector3d& r);

double naive_rmse(const std::vector<double>& est, const std::vector<double>& gt, const std::vector<bool>& valid);
double naive_bad_rate(const std::vector<double>& est, const std::vector<double>& gt,
                      const std::vector<bool>& valid);

/// Dense assembly and solve of the anchored graph-Laplacian propagation on a
/// small grid, 4-connected. `seed_values` is NaN where there is no seed.
std::vector<double> dense_propagation(const Image& gray, const std::vector<double>& seed_values, double c1,
                                      double c2, double sigma_c);

/// Direct same-padded stride-1 convolution stack with ReLU on all but the last layer.
std::vector<double> naive_network(const burstdepth::NetworkSpec& spec, const std::vector<double>& params,
                                  const std::vector<double>& input, int height, int width);

/// Zero-mean NCC between reference patch at (x, y) and target sampled bilinearly
/// at (x + dx, y + dy) over a (2r+1)^2 window, luminance single channel.
double patch_ncc(const Image& ref, const Image& tgt, int x, int y, double dx, double dy, int r);

/// Central finite difference of f at x along coordinate k.
double central_difference(const std::function<double(const Eigen::VectorXd&)>& f, Eigen::VectorXd x, int k,
                          double h);

/// Direct 2-D Gaussian convolution at one pixel with mirrored borders,
/// kernel truncated at `radius` and renormalized.
double gaussian_at(const Image& img, int x, int y, int c, double sigma, int radius);

/// A smooth, well textured single-channel test image.
Image sinusoid_texture(int width, int height, double phase = 0.0);

/// Bilinear sample without the library; one channel.
double bilinear(const Image& img, double x, double y, int c = 0);

}  // namespace oracle
