"""Depth from small-motion burst shots.

Images are float32 arrays in [0, 1], shaped (H, W) or (H, W, C). Flows are
(H, W, 2) and inverse depth (H, W); NaN marks masked pixels.
"""

from ._core import (
    BurstDepthError,
    CameraIntrinsics,
    SmallPose,
    __version__,
    add_signal_dependent_noise,
    align_to_reference,
    bad_pixel_rate,
    convert_flow_between_frames,
    denoise,
    estimate_depth,
    evaluate_depth,
    exposure_fuse,
    flow_from_inverse_depth,
    inverse_depth_from_flow,
    network_parameter_count,
    parabola_vertex,
    project,
    refocus,
    rmse,
    rotation_align_warp,
    small_rotation_matrix,
    synthetic_burst,
    translation_transform_vector,
)

__all__ = [name for name in dir() if not name.startswith("_")]
