#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "burstdepth/geometry.hpp"
#include "burstdepth/image.hpp"
#include "burstdepth/network.hpp"

namespace burstdepth {

/// phi(p) = A (p - center) + center + b.
struct AffineMotion {
  Eigen::Matrix2d A = Eigen::Matrix2d::Identity();
  Eigen::Vector2d b = Eigen::Vector2d::Zero();
  Eigen::Vector2d center = Eigen::Vector2d::Zero();

  Eigen::Vector2d apply(const Eigen::Vector2d& p) const { return A * (p - center) + center + b; }
  Eigen::Vector2d inverse(const Eigen::Vector2d& q) const;
  /// The motion seen after mapping both images through p -> M (p - c) + c.
  AffineMotion conjugate(const Eigen::Matrix2d& M) const;
  /// Analytic flow phi(p) - p on a width x height grid.
  FlowField flow(int width, int height) const;
};

/// One training tuple: reference(p) = target(p + flow(p)).
struct FlowSample {
  Image reference;
  Image target;
  FlowField flow;          // ground truth
  FlowField initial_flow;  // v'
};

struct ToyDatasetConfig {
  int samples = 500;
  int width = 64;
  int height = 64;
  double max_translation = 3.0;    // pixels
  double max_deformation = 0.05;   // per entry of A - I
  double initial_fraction = 0.5;   // v' = fraction * v_gt
  double texture_cell = 4.0;       // pixels
  std::uint64_t seed = 1;
};

FlowSample render_affine_sample(int width, int height, const AffineMotion& motion,
                                std::uint64_t texture_seed, double initial_fraction,
                                double texture_cell);

std::vector<FlowSample> make_toy_dataset(const ToyDatasetConfig& cfg = {});

/// Maps both images through p -> M (p - c) + c with M = scale * Rot(theta)
/// about the image center and carries the flows along: v'(p') = M v(q).
/// Pixels whose source falls outside the frame are zero and masked.
FlowSample rotate_scale_sample(const FlowSample& sample, double theta, double scale);

struct AugmentationConfig {
  bool spatial = true;
  double max_rotation_deg = 17.0;
  double min_scale = 1.0;
  double max_scale = 2.0;
  bool chromatic = true;
  double jitter_std = 0.4;  // brightness, contrast and saturation factors
  /// Fine-tuning draws the jitter independently for reference and target.
  bool independent_jitter = false;
  bool noise = true;
  double noise_sigma = 0.1;  // noise std is drawn from |N(0, noise_sigma)|

  static AugmentationConfig none();
  bool any() const { return spatial || chromatic || noise; }
};

FlowSample augment(const FlowSample& sample, const AugmentationConfig& cfg, std::mt19937_64& rng);

/// Network input stack (reference, target warped by v', v').
FeatureMap<float> sample_input(const FlowSample& sample);
/// Residual target flow - initial_flow, masked where either is.
FlowField residual_target(const FlowSample& sample);

struct TrainingConfig {
  int iterations = 200;
  int batch = 4;
  double learning_rate = 1e-4;
  double decayed_learning_rate = 1e-5;
  int decay_after_epochs = 60;
  bool fine_tune = false;
  double fine_tune_learning_rate = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  AugmentationConfig augmentation;
  /// Leading samples of the dataset scored without augmentation before and
  /// after training.
  int eval_samples = 32;
  std::uint64_t seed = 1;

  void validate() const;
};

struct TrainingReport {
  std::vector<double> loss;  // mean batch EPE per iteration
  double initial_epe = 0.0;
  double final_epe = 0.0;
  bool finite = true;
  double seconds = 0.0;
};

/// Mean residual EPE of the network over the samples, without augmentation.
double residual_epe(const ConvNet<float>& net, std::span<const FlowSample> samples);

/// ADAM on the EPE loss. The learning rate drops to `decayed_learning_rate`
/// after `decay_after_epochs` passes over the data; fine-tuning uses
/// `fine_tune_learning_rate` throughout and independent jitter.
TrainingReport train_toy(ConvNet<float>& net, std::span<const FlowSample> dataset,
                         const TrainingConfig& cfg = {});

}  // namespace burstdepth
