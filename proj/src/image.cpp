#include "burstdepth/image.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace burstdepth {

Image::Image(int width, int height, int channels, float fill)
    : width_(width),
      height_(height),
      channels_(channels),
      data_(static_cast<std::size_t>(width) * height * channels, fill) {}

Image to_luminance(const Image& image) {
  if (image.channels() == 1) return image;
  Image out(image.width(), image.height(), 1);
  const auto src = image.pixels();
  auto dst = out.pixels();
  const int c = image.channels();
  for (std::size_t i = 0; i < out.pixel_count(); ++i) {
    const float* p = &src[i * c];
    dst[i] = 0.299f * p[0] + 0.587f * p[1] + 0.114f * p[2];
  }
  return out;
}

namespace {

int reflect101(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

int clampi(int i, int n) { return std::clamp(i, 0, n - 1); }

bool inside(const Image& image, double x, double y) {
  return x >= 0.0 && y >= 0.0 && x <= image.width() - 1 && y <= image.height() - 1;
}

}  // namespace

bool sample_bilinear(const Image& image, double x, double y, std::span<float> out) {
  if (!inside(image, x, y)) return false;
  const int w = image.width();
  const int h = image.height();
  const int x0 = std::min(static_cast<int>(x), w - 1);
  const int y0 = std::min(static_cast<int>(y), h - 1);
  const int x1 = std::min(x0 + 1, w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  const double ax = x - x0;
  const double ay = y - y0;
  for (int c = 0; c < image.channels(); ++c) {
    const double top = (1.0 - ax) * image.at(x0, y0, c) + ax * image.at(x1, y0, c);
    const double bottom = (1.0 - ax) * image.at(x0, y1, c) + ax * image.at(x1, y1, c);
    out[c] = static_cast<float>((1.0 - ay) * top + ay * bottom);
  }
  return true;
}

double cubic_kernel(double t) {
  constexpr double a = -0.5;
  t = std::abs(t);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

bool sample_bicubic(const Image& image, double x, double y, std::span<float> out) {
  if (!inside(image, x, y)) return false;
  const int w = image.width();
  const int h = image.height();
  const int xi = static_cast<int>(std::floor(x));
  const int yi = static_cast<int>(std::floor(y));
  const double fx = x - xi;
  const double fy = y - yi;
  if (fx == 0.0 && fy == 0.0) {
    for (int c = 0; c < image.channels(); ++c) out[c] = image.at(xi, yi, c);
    return true;
  }
  std::array<double, 4> wx{};
  std::array<double, 4> wy{};
  for (int k = 0; k < 4; ++k) {
    wx[k] = cubic_kernel(fx - (k - 1));
    wy[k] = cubic_kernel(fy - (k - 1));
  }
  for (int c = 0; c < image.channels(); ++c) {
    double acc = 0.0;
    for (int j = 0; j < 4; ++j) {
      if (wy[j] == 0.0) continue;
      const int yy = clampi(yi + j - 1, h);
      double row = 0.0;
      for (int i = 0; i < 4; ++i) {
        if (wx[i] == 0.0) continue;
        row += wx[i] * image.at(clampi(xi + i - 1, w), yy, c);
      }
      acc += wy[j] * row;
    }
    out[c] = static_cast<float>(acc);
  }
  return true;
}

Image gaussian_blur(const Image& image, double sigma) {
  if (sigma <= 0.0 || image.empty()) return image;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    kernel[k + radius] = std::exp(-0.5 * k * k / (sigma * sigma));
    sum += kernel[k + radius];
  }
  for (double& v : kernel) v /= sum;

  const int w = image.width();
  const int h = image.height();
  const int nc = image.channels();
  Image tmp(w, h, nc);
  Image out(w, h, nc);
  std::vector<double> acc(nc);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (int k = -radius; k <= radius; ++k) {
        const int xx = reflect101(x + k, w);
        for (int c = 0; c < nc; ++c) acc[c] += kernel[k + radius] * image.at(xx, y, c);
      }
      for (int c = 0; c < nc; ++c) tmp.at(x, y, c) = static_cast<float>(acc[c]);
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (int k = -radius; k <= radius; ++k) {
        const int yy = reflect101(y + k, h);
        for (int c = 0; c < nc; ++c) acc[c] += kernel[k + radius] * tmp.at(x, yy, c);
      }
      for (int c = 0; c < nc; ++c) out.at(x, y, c) = static_cast<float>(acc[c]);
    }
  }
  return out;
}

Image pyr_down(const Image& image) {
  static constexpr std::array<double, 5> k{1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};
  const int w = image.width();
  const int h = image.height();
  const int nc = image.channels();
  const int ow = (w + 1) / 2;
  const int oh = (h + 1) / 2;
  Image tmp(ow, h, nc);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      for (int c = 0; c < nc; ++c) {
        double acc = 0.0;
        for (int t = -2; t <= 2; ++t) acc += k[t + 2] * image.at(reflect101(2 * x + t, w), y, c);
        tmp.at(x, y, c) = static_cast<float>(acc);
      }
    }
  }
  Image out(ow, oh, nc);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      for (int c = 0; c < nc; ++c) {
        double acc = 0.0;
        for (int t = -2; t <= 2; ++t) acc += k[t + 2] * tmp.at(x, reflect101(2 * y + t, h), c);
        out.at(x, y, c) = static_cast<float>(acc);
      }
    }
  }
  return out;
}

namespace {

// Value of the zero-stuffed signal convolved with [1 4 6 4 1]/8 at fine index i.
double upsample_1d(int i, int coarse_n, const auto& fetch) {
  if (i % 2 == 0) {
    const int j = i / 2;
    return (fetch(reflect101(j - 1, coarse_n)) + 6.0 * fetch(reflect101(j, coarse_n)) +
            fetch(reflect101(j + 1, coarse_n))) /
           8.0;
  }
  const int j = i / 2;
  return (4.0 * fetch(reflect101(j, coarse_n)) + 4.0 * fetch(reflect101(j + 1, coarse_n))) / 8.0;
}

}  // namespace

Image pyr_up(const Image& image, int width, int height) {
  const int w = image.width();
  const int h = image.height();
  const int nc = image.channels();
  Image tmp(width, h, nc);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < nc; ++c) {
        tmp.at(x, y, c) = static_cast<float>(
            upsample_1d(x, w, [&](int j) { return static_cast<double>(image.at(j, y, c)); }));
      }
    }
  }
  Image out(width, height, nc);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < nc; ++c) {
        out.at(x, y, c) = static_cast<float>(
            upsample_1d(y, h, [&](int j) { return static_cast<double>(tmp.at(x, j, c)); }));
      }
    }
  }
  return out;
}

void clamp_inplace(Image& image, float lo, float hi) {
  for (float& v : image.pixels()) v = std::clamp(v, lo, hi);
}

}  // namespace burstdepth
