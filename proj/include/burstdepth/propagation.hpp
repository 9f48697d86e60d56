#pragma once

#include <span>
#include <vector>

#include "burstdepth/geometry.hpp"
#include "burstdepth/image.hpp"

namespace burstdepth {

struct PropagationConfig {
  double c1 = 1.0;        // smoothness weight
  double c2 = 10.0;       // data weight
  double sigma_c = 0.2;   // affinity bandwidth on [0, 1] luminance
  int neighborhood = 4;   // 4 or 8
  /// Edges with affinity below this are treated as cut.
  double min_affinity = 1e-12;
  /// Relative residual the linear solve must reach.
  double tolerance = 1e-8;

  void validate() const;
};

struct DepthSeed {
  PixelCoord position;
  double inverse_depth = 0.0;
};

struct PropagationResult {
  InverseDepthMap depth;
  /// Pixels of guide components that hold no seed; filled with the nearest
  /// seed's value instead of the linear solve.
  Mask filled_from_nearest;
  int unseeded_components = 0;
  double relative_residual = 0.0;
};

/// Minimizes c2 sum_seeds (w_p - s_p)^2 + c1 sum_edges a_pq (w_p - w_q)^2 with
/// a_pq = exp(-(I_p - I_q)^2 / (2 sigma_c^2)) on the guide's luminance.
/// Seeds are snapped to the nearest pixel; seeds outside the image are ignored.
/// Throws kNoSeeds when no seed lands inside the guide.
PropagationResult propagate(std::span<const DepthSeed> seeds, const Image& guide,
                            const PropagationConfig& cfg = {});

/// Flow for a frame from the propagated inverse depth.
FlowField initial_flow_for_frame(const InverseDepthMap& w, const TransformVector& T,
                                 double eps = kMinBaseline);

}  // namespace burstdepth
