#pragma once

#include <memory>

#include "burstdepth/geometry.hpp"
#include "burstdepth/image.hpp"

namespace burstdepth {

template <typename Scalar>
class ConvNet;
using ResidualNetwork = ConvNet<float>;

/// Settings of the classical constrained matcher.
struct MatcherConfig {
  int patch = 11;               // pixels, odd
  double search_range = 3.0;    // pixels either side of the initial flow
  double step = 0.5;            // pixels between scored candidates
  double ncc_threshold = 0.5;
  /// Patches whose intensity standard deviation is below this are untextured.
  double min_patch_std = 1e-3;
  /// Each pixel also scores the 8 windows offset by this many pixels and
  /// keeps the best; 0 scores only the centred window.
  int window_shift = 5;

  void validate() const;
};

struct EstimatorBackend {
  enum class Kind { kClassical, kLearned };

  Kind kind = Kind::kClassical;
  MatcherConfig matcher;
  std::shared_ptr<const ResidualNetwork> network;

  static EstimatorBackend classical(MatcherConfig cfg = {});
  static EstimatorBackend learned(std::shared_ptr<const ResidualNetwork> net);
};

/// Everything a residual estimator sees for one frame. The first three
/// members form the 8-channel stack; `target` and `transform` are what the
/// classical backend needs to search along the epipolar direction.
struct ResidualFlowInput {
  const Image& reference;
  const Image& warped;
  const FlowField& initial_flow;
  const Image& target;
  TransformVector transform;
  /// Pixels of `target` that carry image content (e.g. after rotation
  /// alignment); null means all.
  const Mask* target_valid = nullptr;
};

/// output(p) = bilinear(image, p + flow(p)); masked outside the frame or
/// where the flow is masked.
MaskedImage warp_with_flow(const Image& image, const FlowField& flow);

/// Vertex offset of the parabola through (-1, s_minus), (0, s_0), (1, s_plus),
/// clamped to [-0.5, 0.5]. Returns 0 when the samples are not concave.
double parabola_vertex(double s_minus, double s_0, double s_plus);

/// For each pixel, searches the displacement d along T/|T| in
/// [-range, range] around v_init that maximizes zero-mean NCC between a
/// reference patch and the target. Returns the residual d T/|T|; weak or
/// untextured matches are masked, as are patches touching target pixels
/// outside `target_valid`. Operates on luminance.
FlowField constrained_match(const Image& reference, const Image& target, const FlowField& v_init,
                            const TransformVector& T, const MatcherConfig& cfg = {},
                            const Mask* target_valid = nullptr);

/// Residual flow for one frame from either backend. Low-confidence pixels
/// are masked.
FlowField estimate_residual(const ResidualFlowInput& input, const EstimatorBackend& backend);

}  // namespace burstdepth
