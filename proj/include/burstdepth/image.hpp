#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace burstdepth {

/// Per-pixel validity, 1 = valid. Row-major, one byte per pixel.
using Mask = std::vector<std::uint8_t>;

/// Row-major interleaved float image. Intensities are nominally in [0, 1].
class Image {
 public:
  Image() = default;
  Image(int width, int height, int channels, float fill = 0.0f);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int channels() const noexcept { return channels_; }
  std::size_t pixel_count() const noexcept {
    return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
  }
  bool empty() const noexcept { return data_.empty(); }

  float& at(int x, int y, int c = 0) noexcept {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }
  float at(int x, int y, int c = 0) const noexcept {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }

  std::span<float> pixels() noexcept { return data_; }
  std::span<const float> pixels() const noexcept { return data_; }
  std::vector<float>& data() noexcept { return data_; }
  const std::vector<float>& data() const noexcept { return data_; }

  bool same_shape(const Image& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_ && channels_ == other.channels_;
  }
  bool same_size(int width, int height) const noexcept {
    return width_ == width && height_ == height;
  }

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<float> data_;
};

/// An image paired with the pixels that carry meaningful samples.
struct MaskedImage {
  Image image;
  Mask valid;
};

/// Rec. 601 luma for 3-channel input; 1-channel input is copied.
Image to_luminance(const Image& image);

/// Bilinear sample of every channel at (x, y). Returns false (and leaves `out`
/// untouched) when the position falls outside [0, w-1] x [0, h-1].
bool sample_bilinear(const Image& image, double x, double y, std::span<float> out);

/// Keys cubic convolution (a = -0.5) with replicated borders. Same bounds rule
/// as sample_bilinear. Integer positions reproduce the pixel exactly.
bool sample_bicubic(const Image& image, double x, double y, std::span<float> out);

/// Keys cubic kernel weight for offset t.
double cubic_kernel(double t);

/// Separable Gaussian blur with reflected borders; sigma <= 0 copies.
Image gaussian_blur(const Image& image, double sigma);

/// 2x decimation after a [1 4 6 4 1]/16 blur.
Image pyr_down(const Image& image);

/// Upsample to (width, height) with the [1 4 6 4 1]/8 interpolation kernel.
Image pyr_up(const Image& image, int width, int height);

/// Clamp all samples to [lo, hi].
void clamp_inplace(Image& image, float lo = 0.0f, float hi = 1.0f);

}  // namespace burstdepth
