#pragma once

#include <span>
#include <vector>

#include "burstdepth/geometry.hpp"
#include "burstdepth/image.hpp"

namespace burstdepth {

struct TrackingConfig {
  double harris_k = 0.04;
  int corner_count_target = 500;
  double min_corner_distance = 10.0;  // pixels
  int klt_window = 21;                // pixels, odd
  int pyramid_levels = 3;
  /// Mean absolute patch residual after convergence, in 8-bit gray levels.
  double max_klt_error = 30.0;
  /// Corners weaker than this fraction of the strongest response are dropped.
  double harris_quality = 0.01;
  int klt_max_iterations = 30;
  double klt_epsilon = 0.01;  // pixels
  /// Smallest eigenvalue of the per-pixel averaged gradient matrix.
  double klt_min_eigenvalue = 1e-5;
  /// track_sequence throws kInsufficientTracks below this many full tracks.
  int min_tracks = 50;

  void validate() const;
};

/// One reference-frame corner followed through the burst. positions[0] is
/// the reference position; once a track is lost it stays lost.
struct FeatureTrack {
  PixelCoord ref_position;
  std::vector<PixelCoord> positions;
  std::vector<std::uint8_t> tracked;

  bool complete() const;
  /// Index of the first lost frame, or positions.size() for complete tracks.
  std::size_t lost_at() const;
};

/// Maps intensities through 255 * CDF on the 8-bit quantized histogram.
/// Multi-channel input is reduced to luminance first.
Image histogram_equalize(const Image& image);

/// Harris response det(M) - k tr(M)^2 of the Gaussian-weighted structure tensor.
Image harris_response(const Image& gray, double k);

/// Local maxima of the Harris response above the quality threshold, greedily
/// thinned to min_corner_distance, strongest first, truncated to the target.
std::vector<PixelCoord> detect_harris(const Image& image, const TrackingConfig& cfg);

/// Chained frame-to-frame pyramidal Lucas-Kanade. images[0] is the reference.
/// Throws kInsufficientTracks when fewer than cfg.min_tracks tracks survive
/// every frame.
std::vector<FeatureTrack> track_sequence(std::span<const Image> images,
                                         std::span<const PixelCoord> corners,
                                         const TrackingConfig& cfg);

std::vector<FeatureTrack> complete_tracks(std::span<const FeatureTrack> tracks);

}  // namespace burstdepth
