#include "burstdepth/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "burstdepth/error.hpp"

namespace burstdepth {

FrameOrder frame_order(std::span<const TransformVector> transforms, FrameOrderPolicy policy,
                       double eps) {
  FrameOrder out;
  for (int i = 0; i < static_cast<int>(transforms.size()); ++i) {
    (transforms[i].degenerate(eps) ? out.degenerate : out.order).push_back(i);
  }
  if (policy == FrameOrderPolicy::kAscendingBaseline) {
    std::stable_sort(out.order.begin(), out.order.end(), [&](int a, int b) {
      return transforms[a].norm() < transforms[b].norm();
    });
  }
  return out;
}

void PipelineConfig::validate() const {
  tracking.validate();
  propagation.validate();
  if (backend.kind == EstimatorBackend::Kind::kClassical) backend.matcher.validate();
  if (backend.kind == EstimatorBackend::Kind::kLearned && !backend.network) {
    throw Error(ErrorCode::kConfiguration, "learned backend has no network");
  }
  if (!(min_baseline > 0.0)) throw Error(ErrorCode::kConfiguration, "min baseline must be > 0");
  if (min_frames < 2) throw Error(ErrorCode::kConfiguration, "min_frames must be >= 2");
}

double PipelineResult::total_seconds() const {
  double s = 0.0;
  for (const StageTiming& t : timings) s += t.seconds;
  return s;
}

namespace {

using Clock = std::chrono::steady_clock;

// Runs fn, tags escaping library errors with the stage name and records the
// elapsed time.
template <typename Fn>
auto staged(const char* stage, std::vector<StageTiming>* timings, Fn&& fn) {
  const auto start = Clock::now();
  auto finish = [&] {
    if (timings) {
      timings->push_back({stage, std::chrono::duration<double>(Clock::now() - start).count()});
    }
  };
  try {
    if constexpr (std::is_void_v<decltype(fn())>) {
      fn();
      finish();
    } else {
      auto value = fn();
      finish();
      return value;
    }
  } catch (const Error& e) {
    if (!e.stage().empty()) throw;
    throw Error(e.code(), e.what(), stage);
  }
}

void check_inputs(std::span<const Image> images, const CameraIntrinsics& K, const PipelineConfig& cfg) {
  cfg.validate();
  K.validate();
  if (static_cast<int>(images.size()) < cfg.min_frames) {
    throw Error(ErrorCode::kConfiguration, "need at least " + std::to_string(cfg.min_frames) +
                                               " frames, got " + std::to_string(images.size()));
  }
  for (std::size_t i = 1; i < images.size(); ++i) {
    if (!images[i].same_shape(images[0])) {
      throw Error(ErrorCode::kShapeMismatch, "frame " + std::to_string(i) + " differs in shape");
    }
  }
}

}  // namespace

BurstGeometry estimate_geometry(std::span<const Image> images, const CameraIntrinsics& K,
                                const PipelineConfig& cfg, std::vector<StageTiming>* timings) {
  check_inputs(images, K, cfg);
  BurstGeometry geometry;
  const std::vector<FeatureTrack> tracks = staged("tracking", timings, [&] {
    std::vector<Image> equalized;
    equalized.reserve(images.size());
    for (const Image& img : images) equalized.push_back(histogram_equalize(img));
    const std::vector<PixelCoord> corners = detect_harris(equalized[0], cfg.tracking);
    return complete_tracks(track_sequence(equalized, corners, cfg.tracking));
  });
  geometry.track_count = static_cast<int>(tracks.size());
  geometry.bundle = staged("bundle-adjustment", timings, [&] {
    BundleProblem problem;
    problem.K = K;
    problem.tracks = tracks;
    return solve_lm(problem, cfg.bundle);
  });
  geometry.poses = geometry.bundle.poses;
  for (std::size_t k = 0; k < geometry.bundle.points.size(); ++k) {
    const Eigen::Vector3d& X = geometry.bundle.points[k];
    geometry.seeds.push_back({tracks[geometry.bundle.point_ids[k]].ref_position, 1.0 / X.z()});
  }
  return geometry;
}

PipelineResult refine_depth(std::span<const Image> images, const CameraIntrinsics& K,
                            const BurstGeometry& geometry, const PipelineConfig& cfg,
                            const FrameCallback& on_frame) {
  check_inputs(images, K, cfg);
  if (geometry.poses.size() != images.size()) {
    throw Error(ErrorCode::kShapeMismatch, "one pose per frame required", "refinement");
  }
  PipelineResult result;
  result.geometry = geometry;
  result.width = images[0].width();
  result.height = images[0].height();
  const Image& reference = images[0];

  result.transforms.push_back({});
  for (std::size_t i = 1; i < images.size(); ++i) {
    result.transforms.push_back(translation_transform_vector(K, geometry.poses[i].t));
  }
  const FrameOrder order = frame_order(std::span(result.transforms).subspan(1), cfg.order, cfg.min_baseline);
  for (int d : order.degenerate) result.skipped.push_back({d + 1, "degenerate baseline"});
  for (int o : order.order) result.processed_frames.push_back(o + 1);
  if (result.processed_frames.empty()) {
    throw Error(ErrorCode::kDegenerateBaseline, "every frame has |T| below the minimum baseline",
                "frame-order");
  }

  const PropagationResult propagated = staged("propagation", &result.timings, [&] {
    return propagate(geometry.seeds, reference, cfg.propagation);
  });

  if (cfg.keep_flows) result.flows.assign(images.size(), FlowField());
  std::vector<double> lsq_num;
  std::vector<double> lsq_den;
  if (cfg.average_final_depth) {
    lsq_num.assign(reference.pixel_count(), 0.0);
    lsq_den.assign(reference.pixel_count(), 0.0);
  }

  FlowField initial = initial_flow_for_frame(propagated.depth,
                                             result.transforms[result.processed_frames.front()],
                                             cfg.min_baseline);
  FlowField refined;
  staged("refinement", &result.timings, [&] {
    for (std::size_t step = 0; step < result.processed_frames.size(); ++step) {
      const int frame = result.processed_frames[step];
      const TransformVector& T = result.transforms[frame];
      const MaskedImage aligned = rotation_align_warp(images[frame], K, geometry.poses[frame].r);
      // Only the network consumes the pre-warped target.
      const bool learned = cfg.backend.kind == EstimatorBackend::Kind::kLearned;
      const Image warped = learned ? warp_with_flow(aligned.image, initial).image : Image();
      const FlowField residual =
          estimate_residual({reference, warped, initial, aligned.image, T, &aligned.valid}, cfg.backend);

      refined = initial;
      for (std::size_t i = 0; i < refined.size(); ++i) {
        if (refined.valid[i] && residual.valid[i]) {
          refined.set(i, initial.du(i) + residual.du(i), initial.dv(i) + residual.dv(i));
        }
      }
      if (on_frame) on_frame({frame, static_cast<int>(step), T, initial, residual, refined});
      if (cfg.average_final_depth) {
        for (std::size_t i = 0; i < refined.size(); ++i) {
          if (!refined.valid[i]) continue;
          lsq_num[i] += T.tx * refined.du(i) + T.ty * refined.dv(i);
          lsq_den[i] += T.squared_norm();
        }
      }
      if (step + 1 < result.processed_frames.size()) {
        initial = convert_flow_between_frames(refined, T,
                                              result.transforms[result.processed_frames[step + 1]],
                                              cfg.min_baseline);
      }
      if (cfg.keep_flows) result.flows[frame] = refined;
    }
  });

  if (cfg.average_final_depth) {
    result.inverse_depth = InverseDepthMap(result.width, result.height);
    for (std::size_t i = 0; i < lsq_num.size(); ++i) {
      if (lsq_den[i] > 0.0) {
        result.inverse_depth.data[i] = std::max(lsq_num[i] / lsq_den[i], 0.0);
      } else {
        result.inverse_depth.invalidate(i);
      }
    }
  } else {
    result.inverse_depth =
        inverse_depth_from_flow(refined, result.transforms[result.processed_frames.back()],
                                cfg.min_baseline);
  }
  result.depth.resize(result.inverse_depth.size());
  for (std::size_t i = 0; i < result.depth.size(); ++i) {
    const double w = result.inverse_depth.data[i];
    result.depth[i] = result.inverse_depth.valid[i] && w > 0.0 ? 1.0 / w
                                                               : std::numeric_limits<double>::infinity();
  }
  return result;
}

PipelineResult run(std::span<const Image> images, const CameraIntrinsics& K, const PipelineConfig& cfg,
                   const FrameCallback& on_frame) {
  std::vector<StageTiming> timings;
  const BurstGeometry geometry = estimate_geometry(images, K, cfg, &timings);
  PipelineResult result = refine_depth(images, K, geometry, cfg, on_frame);
  result.timings.insert(result.timings.begin(), timings.begin(), timings.end());
  return result;
}

}  // namespace burstdepth
