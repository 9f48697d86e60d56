#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "burstdepth/geometry.hpp"
#include "burstdepth/image.hpp"

namespace burstdepth {

/// Frames resampled to the reference viewpoint. frames[0] is the reference.
struct AlignedBurst {
  std::vector<Image> frames;
  std::vector<Mask> valid;
};

/// Each output pixel samples frame i (bicubic) at <K (R_i x + w t_i)> where
/// x = K^-1 [u, v, 1] and w is the reference inverse depth. Pixels with
/// masked depth or out-of-frame samples are masked. Frame 0 is copied.
AlignedBurst align_to_reference(std::span<const Image> originals, const CameraIntrinsics& K,
                                std::span<const SmallPose> poses, const InverseDepthMap& depth);

/// Default bandwidth: 10 gray levels on the 8-bit scale.
inline constexpr double kDenoiseSigma = 10.0 / 255.0;

/// Per pixel, mean over valid frames weighted by
/// exp(-|I_i(p) - I_0(p)|^2 / (2 sigma^2)); the reference has weight 1.
Image denoise_weighted_average(const AlignedBurst& burst, double sigma = kDenoiseSigma);

struct FusionConfig {
  double contrast_exponent = 1.0;
  double saturation_exponent = 1.0;
  double exposedness_exponent = 1.0;
  double exposedness_sigma = 0.2;
  /// Pyramid levels; 0 picks floor(log2(min dimension)) - 2.
  int levels = 0;

  void validate() const;
};

/// Per-frame normalized quality weights (sum to 1 at every pixel). Masked
/// pixels get weight 0; pixels where every weight vanishes fall back to
/// uniform weights over the valid frames.
std::vector<Image> fusion_weights(const AlignedBurst& burst, const FusionConfig& cfg = {});

/// Mertens-style exposure fusion with Laplacian pyramid blending, clamped to [0, 1].
Image exposure_fuse(const AlignedBurst& burst, const FusionConfig& cfg = {});

/// Shallow depth of field: inverse depth is split into layers whose Gaussian
/// blur sigma is aperture * |w - 1/focal_depth| pixels, composited back to
/// front. Masked depth is treated as in focus.
Image synthetic_refocus(const Image& image, const InverseDepthMap& depth, double focal_depth,
                        double aperture);

/// Root mean square of est - gt over pixels flagged in `valid`.
/// Throws kNoValidPixels when nothing is valid.
double rmse(std::span<const double> estimate, std::span<const double> ground_truth,
            const Mask& valid);

/// Percentage of valid pixels with |est - gt| >= 0.1 * max valid gt.
double bad_pixel_rate(std::span<const double> estimate, std::span<const double> ground_truth,
                      const Mask& valid);

/// median(gt / est) over valid pixels.
double median_scale(std::span<const double> estimate, std::span<const double> ground_truth,
                    const Mask& valid);

struct DepthErrors {
  double rmse = 0.0;
  double bad_pixel_rate_percent = 0.0;
  double scale = 1.0;
  std::size_t valid_pixels = 0;
};

/// Scale-aligns `estimate` by median_scale and scores it against `ground_truth`.
/// Pixels count when both depths are finite and positive.
DepthErrors evaluate_depth(std::span<const double> estimate, std::span<const double> ground_truth);

/// Adds N(0, (sigma sqrt(I))^2) per sample, clamps to [0, 1]. Deterministic in seed.
Image add_signal_dependent_noise(const Image& image, double sigma, std::uint64_t seed);

/// Peak signal-to-noise ratio for unit peak, over all samples.
double psnr(const Image& image, const Image& reference);

}  // namespace burstdepth
