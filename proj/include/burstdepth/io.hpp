#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "burstdepth/geometry.hpp"
#include "burstdepth/image.hpp"

namespace burstdepth::io {

namespace fs = std::filesystem;

/// 8- or 16-bit PNG/JPEG/... scaled to [0, 1]. Color comes back as RGB,
/// alpha is dropped, grayscale stays 1 channel. Throws kIo.
Image read_image(const fs::path& path);
/// Clamps to [0, 1] and writes 8-bit (16-bit when `sixteen_bit`).
void write_image(const fs::path& path, const Image& image, bool sixteen_bit = false);

/// Image files in `dir` sorted by name.
std::vector<fs::path> list_frames(const fs::path& dir);
std::vector<Image> read_frames(const fs::path& dir);

/// Single-channel (or 3-channel) float map, rows top to bottom.
struct PfmImage {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<float> data;
};

/// Little-endian ("-1.0" scale), rows stored bottom to top as the format requires.
void write_pfm(const fs::path& path, const PfmImage& image);
/// Accepts either endianness and both "Pf" and "PF".
PfmImage read_pfm(const fs::path& path);

/// Depth with +inf for invalid pixels.
PfmImage depth_to_pfm(const std::vector<double>& depth, int width, int height);
/// Inverse depth from a depth PFM; non-finite or non-positive depth is masked.
InverseDepthMap inverse_depth_from_pfm(const PfmImage& depth);

/// Flow magnitudes above this are the format's "unknown" marker.
inline constexpr float kFloUnknown = 1e10f;

/// Middlebury .flo: "PIEH", int32 width, int32 height, interleaved float32 (u, v).
void write_flo(const fs::path& path, const FlowField& flow);
FlowField read_flo(const fs::path& path);

struct CalibrationFile {
  CameraIntrinsics K;
  int width = 0;
  int height = 0;
  std::string comment;
};

/// `key = value` lines (fx, fy, cx, cy, width, height); '#' starts a comment.
CalibrationFile read_calibration(const fs::path& path);
void write_calibration(const fs::path& path, const CalibrationFile& calib);

/// One line per frame: index rx ry rz tx ty tz.
void write_poses(const fs::path& path, const std::vector<SmallPose>& poses);
std::vector<SmallPose> read_poses(const fs::path& path);

/// Depth rendered through a perceptual colormap (near = warm); masked pixels black.
Image colorize_inverse_depth(const InverseDepthMap& w);

}  // namespace burstdepth::io
