#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "burstdepth/bundle_adjustment.hpp"
#include "burstdepth/geometry.hpp"
#include "burstdepth/propagation.hpp"
#include "burstdepth/residual_flow.hpp"
#include "burstdepth/tracking.hpp"

namespace burstdepth {

enum class FrameOrderPolicy {
  kAscendingBaseline,  // small |T| first
  kCapture,            // frames in the order they were shot
};

struct FrameOrder {
  std::vector<int> order;       // indices into the transform list
  std::vector<int> degenerate;  // excluded, |T| < eps
};

/// Stable ordering of the non-degenerate transforms under `policy`.
FrameOrder frame_order(std::span<const TransformVector> transforms,
                       FrameOrderPolicy policy = FrameOrderPolicy::kAscendingBaseline,
                       double eps = kMinBaseline);

struct PipelineConfig {
  EstimatorBackend backend = EstimatorBackend::classical();
  TrackingConfig tracking;
  PropagationConfig propagation;
  LmOptions bundle;
  double min_baseline = kMinBaseline;
  FrameOrderPolicy order = FrameOrderPolicy::kAscendingBaseline;
  /// Combine every processed frame's flow into the final inverse depth
  /// instead of using only the last one.
  bool average_final_depth = false;
  /// Keep each frame's refined flow in the result.
  bool keep_flows = false;
  int min_frames = 5;

  void validate() const;
};

/// Camera motion and sparse structure recovered from the burst.
struct BurstGeometry {
  std::vector<SmallPose> poses;  // poses[0] is the reference
  std::vector<DepthSeed> seeds;  // sparse inverse depth on the reference grid
  BundleSolution bundle;
  int track_count = 0;
};

struct SkippedFrame {
  int frame = 0;
  std::string reason;
};

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

/// Observes one refinement step of the frame loop.
struct FrameStep {
  int frame = 0;
  int step = 0;
  TransformVector transform;
  const FlowField& initial;   // v'_i
  const FlowField& residual;  // estimator output (may be masked)
  const FlowField& refined;   // v_i
};
using FrameCallback = std::function<void(const FrameStep&)>;

struct PipelineResult {
  InverseDepthMap inverse_depth;
  /// z = 1/w; +inf where w is masked or zero.
  std::vector<double> depth;
  BurstGeometry geometry;
  std::vector<TransformVector> transforms;  // one per frame, reference included
  std::vector<int> processed_frames;        // in processing order
  std::vector<SkippedFrame> skipped;
  std::vector<FlowField> flows;             // refined flow per frame when kept
  std::vector<StageTiming> timings;
  int width = 0;
  int height = 0;

  double total_seconds() const;
};

/// Tracking on equalized frames followed by bundle adjustment.
BurstGeometry estimate_geometry(std::span<const Image> images, const CameraIntrinsics& K,
                                const PipelineConfig& cfg, std::vector<StageTiming>* timings = nullptr);

/// Rotation alignment, propagation of the seeds and the per-frame residual
/// refinement loop, with the given camera motion.
PipelineResult refine_depth(std::span<const Image> images, const CameraIntrinsics& K,
                            const BurstGeometry& geometry, const PipelineConfig& cfg,
                            const FrameCallback& on_frame = {});

/// Full pipeline. images[0] is the reference.
PipelineResult run(std::span<const Image> images, const CameraIntrinsics& K,
                   const PipelineConfig& cfg = {}, const FrameCallback& on_frame = {});

}  // namespace burstdepth
