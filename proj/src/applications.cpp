#include "burstdepth/applications.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "burstdepth/error.hpp"

namespace burstdepth {

AlignedBurst align_to_reference(std::span<const Image> originals, const CameraIntrinsics& K,
                                std::span<const SmallPose> poses, const InverseDepthMap& depth) {
  K.validate();
  if (originals.empty()) throw Error(ErrorCode::kConfiguration, "alignment needs at least one frame");
  if (poses.size() != originals.size()) {
    throw Error(ErrorCode::kShapeMismatch, "alignment needs one pose per frame");
  }
  const int w = originals[0].width();
  const int h = originals[0].height();
  if (depth.width != w || depth.height != h) {
    throw Error(ErrorCode::kShapeMismatch, "depth map does not match the reference frame");
  }
  AlignedBurst burst;
  burst.frames.push_back(originals[0]);
  burst.valid.emplace_back(originals[0].pixel_count(), 1);
  for (std::size_t f = 1; f < originals.size(); ++f) {
    const Image& src = originals[f];
    if (!src.same_shape(originals[0])) {
      throw Error(ErrorCode::kShapeMismatch, "frame " + std::to_string(f) + " differs in shape");
    }
    const int nc = src.channels();
    const Eigen::Matrix3d R = small_rotation_matrix(poses[f].r);
    const Eigen::Vector3d t = poses[f].t;
    Image out(w, h, nc);
    Mask valid(out.pixel_count(), 0);
    auto dst = out.pixels();
#pragma omp parallel for schedule(static)
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t i = std::size_t(y) * w + x;
        if (!depth.valid[i] || !(depth.data[i] >= 0.0)) continue;
        const Eigen::Vector3d ray((x - K.cx) / K.fx, (y - K.cy) / K.fy, 1.0);
        // Reference point divided by its depth, so infinite depth (w = 0) is fine.
        const Eigen::Vector3d p = R * ray + depth.data[i] * t;
        if (!(p.z() > 0.0)) continue;
        const double u = K.fx * p.x() / p.z() + K.cx;
        const double v = K.fy * p.y() / p.z() + K.cy;
        if (sample_bicubic(src, u, v, dst.subspan(i * nc, nc))) valid[i] = 1;
      }
    }
    burst.frames.push_back(std::move(out));
    burst.valid.push_back(std::move(valid));
  }
  return burst;
}

namespace {

void require_burst(const AlignedBurst& burst, std::size_t min_frames) {
  if (burst.frames.size() < min_frames) {
    throw Error(ErrorCode::kConfiguration,
                "burst needs at least " + std::to_string(min_frames) + " frames");
  }
  if (burst.valid.size() != burst.frames.size()) {
    throw Error(ErrorCode::kShapeMismatch, "one validity mask per frame");
  }
  for (std::size_t f = 0; f < burst.frames.size(); ++f) {
    if (!burst.frames[f].same_shape(burst.frames[0]) ||
        burst.valid[f].size() != burst.frames[0].pixel_count()) {
      throw Error(ErrorCode::kShapeMismatch, "aligned frames must share the reference shape");
    }
  }
}

}  // namespace

Image denoise_weighted_average(const AlignedBurst& burst, double sigma) {
  require_burst(burst, 2);
  if (!(sigma > 0.0)) throw Error(ErrorCode::kConfiguration, "denoise sigma must be > 0");
  const Image& ref = burst.frames[0];
  const int nc = ref.channels();
  const std::size_t n = ref.pixel_count();
  Image out(ref.width(), ref.height(), nc);
  const double inv = 1.0 / (2.0 * sigma * sigma);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    std::vector<double> acc(nc, 0.0);
    double total = 0.0;
    for (std::size_t f = 0; f < burst.frames.size(); ++f) {
      if (f > 0 && !burst.valid[f][i]) continue;
      const float* px = &burst.frames[f].data()[i * nc];
      double weight = 1.0;
      if (f > 0) {
        double d2 = 0.0;
        for (int c = 0; c < nc; ++c) {
          const double d = static_cast<double>(px[c]) - ref.data()[i * nc + c];
          d2 += d * d;
        }
        weight = std::exp(-d2 * inv);
      }
      for (int c = 0; c < nc; ++c) acc[c] += weight * px[c];
      total += weight;
    }
    for (int c = 0; c < nc; ++c) out.data()[i * nc + c] = static_cast<float>(acc[c] / total);
  }
  return out;
}

void FusionConfig::validate() const {
  if (contrast_exponent < 0.0 || saturation_exponent < 0.0 || exposedness_exponent < 0.0) {
    throw Error(ErrorCode::kConfiguration, "fusion exponents must be >= 0");
  }
  if (!(exposedness_sigma > 0.0)) throw Error(ErrorCode::kConfiguration, "exposedness sigma must be > 0");
  if (levels < 0) throw Error(ErrorCode::kConfiguration, "pyramid levels must be >= 1 (0 = auto)");
}

namespace {

// Keeps flat frames from zeroing the product of quality measures.
constexpr double kQualityFloor = 1e-3;

}  // namespace

std::vector<Image> fusion_weights(const AlignedBurst& burst, const FusionConfig& cfg) {
  require_burst(burst, 1);
  cfg.validate();
  const int w = burst.frames[0].width();
  const int h = burst.frames[0].height();
  const int nc = burst.frames[0].channels();
  const std::size_t n = burst.frames[0].pixel_count();
  std::vector<Image> weights;
  for (std::size_t f = 0; f < burst.frames.size(); ++f) {
    const Image& img = burst.frames[f];
    const Image gray = to_luminance(img);
    Image weight(w, h, 1);
    const double inv = 1.0 / (2.0 * cfg.exposedness_sigma * cfg.exposedness_sigma);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t i = std::size_t(y) * w + x;
        if (!burst.valid[f][i]) continue;
        auto g = [&](int xx, int yy) {
          return static_cast<double>(gray.at(std::clamp(xx, 0, w - 1), std::clamp(yy, 0, h - 1)));
        };
        const double contrast =
            std::abs(g(x - 1, y) + g(x + 1, y) + g(x, y - 1) + g(x, y + 1) - 4.0 * g(x, y));
        double mean = 0.0;
        for (int c = 0; c < nc; ++c) mean += img.at(x, y, c);
        mean /= nc;
        double var = 0.0;
        double exposedness = 1.0;
        for (int c = 0; c < nc; ++c) {
          const double v = img.at(x, y, c);
          var += (v - mean) * (v - mean);
          exposedness *= std::exp(-(v - 0.5) * (v - 0.5) * inv);
        }
        const double saturation = std::sqrt(var / nc);
        weight.at(x, y) = static_cast<float>(std::pow(contrast + kQualityFloor, cfg.contrast_exponent) *
                                             std::pow(saturation + kQualityFloor, cfg.saturation_exponent) *
                                             std::pow(exposedness + kQualityFloor, cfg.exposedness_exponent));
      }
    }
    weights.push_back(std::move(weight));
  }
  for (std::size_t i = 0; i < n; ++i) {
    double total = 0.0;
    for (const Image& wt : weights) total += wt.data()[i];
    if (total > 0.0) {
      for (Image& wt : weights) wt.data()[i] = static_cast<float>(wt.data()[i] / total);
      continue;
    }
    int valid = 0;
    for (std::size_t f = 0; f < weights.size(); ++f) valid += burst.valid[f][i] ? 1 : 0;
    for (std::size_t f = 0; f < weights.size(); ++f) {
      const bool use = valid == 0 ? f == 0 : burst.valid[f][i] != 0;
      weights[f].data()[i] = use ? 1.0f / std::max(valid, 1) : 0.0f;
    }
  }
  return weights;
}

namespace {

std::vector<Image> gaussian_pyramid(const Image& image, int levels) {
  std::vector<Image> pyr{image};
  for (int l = 1; l < levels; ++l) pyr.push_back(pyr_down(pyr.back()));
  return pyr;
}

void add_scaled(Image& dst, const Image& src, const Image& weight) {
  const int nc = src.channels();
  for (std::size_t i = 0; i < weight.pixel_count(); ++i) {
    for (int c = 0; c < nc; ++c) dst.data()[i * nc + c] += weight.data()[i] * src.data()[i * nc + c];
  }
}

}  // namespace

Image exposure_fuse(const AlignedBurst& burst, const FusionConfig& cfg) {
  require_burst(burst, 2);
  const std::vector<Image> weights = fusion_weights(burst, cfg);
  const Image& ref = burst.frames[0];
  const int min_dim = std::min(ref.width(), ref.height());
  int levels = cfg.levels > 0 ? cfg.levels
                              : static_cast<int>(std::floor(std::log2(std::max(min_dim, 1)))) - 2;
  levels = std::max(levels, 1);

  std::vector<Image> blended;
  for (std::size_t f = 0; f < burst.frames.size(); ++f) {
    // Masked pixels carry reference content so they add no spurious edges.
    Image frame = burst.frames[f];
    const int nc = frame.channels();
    for (std::size_t i = 0; i < frame.pixel_count(); ++i) {
      if (burst.valid[f][i]) continue;
      for (int c = 0; c < nc; ++c) frame.data()[i * nc + c] = ref.data()[i * nc + c];
    }
    const std::vector<Image> gauss = gaussian_pyramid(frame, levels);
    const std::vector<Image> wpyr = gaussian_pyramid(weights[f], levels);
    if (blended.empty()) {
      for (const Image& g : gauss) blended.emplace_back(g.width(), g.height(), g.channels());
    }
    for (int l = 0; l < levels; ++l) {
      Image band = gauss[l];
      if (l + 1 < levels) {
        const Image up = pyr_up(gauss[l + 1], band.width(), band.height());
        for (std::size_t i = 0; i < band.data().size(); ++i) band.data()[i] -= up.data()[i];
      }
      add_scaled(blended[l], band, wpyr[l]);
    }
  }
  Image result = blended.back();
  for (int l = levels - 2; l >= 0; --l) {
    Image up = pyr_up(result, blended[l].width(), blended[l].height());
    for (std::size_t i = 0; i < up.data().size(); ++i) up.data()[i] += blended[l].data()[i];
    result = std::move(up);
  }
  clamp_inplace(result, 0.0f, 1.0f);
  return result;
}

namespace {

// Largest blur difference between pixels sharing a refocus layer, in pixels.
constexpr double kLayerSigmaStep = 0.25;
constexpr int kMaxLayers = 64;

}  // namespace

Image synthetic_refocus(const Image& image, const InverseDepthMap& depth, double focal_depth,
                        double aperture) {
  if (!image.same_size(depth.width, depth.height)) {
    throw Error(ErrorCode::kShapeMismatch, "refocus depth does not match the image");
  }
  if (!(focal_depth > 0.0) || !(aperture >= 0.0)) {
    throw Error(ErrorCode::kConfiguration, "refocus needs focal depth > 0 and aperture >= 0");
  }
  if (aperture == 0.0) return image;
  const double w_focus = 1.0 / focal_depth;
  const std::size_t n = image.pixel_count();
  const int nc = image.channels();

  std::vector<double> w(n);
  double w_min = std::numeric_limits<double>::infinity();
  double w_max = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = depth.valid[i] && std::isfinite(depth.data[i]) ? std::max(depth.data[i], 0.0) : w_focus;
    w_min = std::min(w_min, w[i]);
    w_max = std::max(w_max, w[i]);
  }
  const double span = w_max - w_min;
  const int bins = span > 0.0
                       ? std::clamp(static_cast<int>(std::ceil(aperture * span / kLayerSigmaStep)), 1, kMaxLayers)
                       : 1;
  std::vector<int> layer_of(n, 0);
  std::vector<double> layer_sum(bins, 0.0);
  std::vector<std::size_t> layer_count(bins, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const int b = span > 0.0 ? std::min(bins - 1, static_cast<int>((w[i] - w_min) / span * bins)) : 0;
    layer_of[i] = b;
    layer_sum[b] += w[i];
    ++layer_count[b];
  }

  // Back to front: small inverse depth (far) first.
  std::vector<double> acc(n * nc, 0.0);
  std::vector<double> coverage(n, 0.0);
  for (int b = 0; b < bins; ++b) {
    if (layer_count[b] == 0) continue;
    const double w_layer = layer_sum[b] / static_cast<double>(layer_count[b]);
    const double sigma = aperture * std::abs(w_layer - w_focus);
    Image layer(image.width(), image.height(), nc + 1);
    for (std::size_t i = 0; i < n; ++i) {
      if (layer_of[i] != b) continue;
      for (int c = 0; c < nc; ++c) layer.data()[i * (nc + 1) + c] = image.data()[i * nc + c];
      layer.data()[i * (nc + 1) + nc] = 1.0f;
    }
    const Image blurred = gaussian_blur(layer, sigma);
    for (std::size_t i = 0; i < n; ++i) {
      const double alpha = blurred.data()[i * (nc + 1) + nc];
      for (int c = 0; c < nc; ++c) {
        acc[i * nc + c] = blurred.data()[i * (nc + 1) + c] + (1.0 - alpha) * acc[i * nc + c];
      }
      coverage[i] = alpha + (1.0 - alpha) * coverage[i];
    }
  }
  Image out(image.width(), image.height(), nc);
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < nc; ++c) {
      out.data()[i * nc + c] = coverage[i] > 0.0 ? static_cast<float>(acc[i * nc + c] / coverage[i])
                                                 : image.data()[i * nc + c];
    }
  }
  return out;
}

namespace {

void require_maps(std::span<const double> a, std::span<const double> b, const Mask& valid) {
  if (a.size() != b.size() || a.size() != valid.size()) {
    throw Error(ErrorCode::kShapeMismatch, "depth maps and mask must have equal size");
  }
}

}  // namespace

double rmse(std::span<const double> estimate, std::span<const double> ground_truth,
            const Mask& valid) {
  require_maps(estimate, ground_truth, valid);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < valid.size(); ++i) {
    if (!valid[i]) continue;
    const double d = estimate[i] - ground_truth[i];
    sum += d * d;
    ++count;
  }
  if (count == 0) throw Error(ErrorCode::kNoValidPixels, "rmse over an empty valid set");
  return std::sqrt(sum / static_cast<double>(count));
}

double bad_pixel_rate(std::span<const double> estimate, std::span<const double> ground_truth,
                      const Mask& valid) {
  require_maps(estimate, ground_truth, valid);
  double max_gt = -std::numeric_limits<double>::infinity();
  std::size_t count = 0;
  for (std::size_t i = 0; i < valid.size(); ++i) {
    if (!valid[i]) continue;
    max_gt = std::max(max_gt, ground_truth[i]);
    ++count;
  }
  if (count == 0) throw Error(ErrorCode::kNoValidPixels, "bad pixel rate over an empty valid set");
  const double threshold = 0.1 * max_gt;
  std::size_t bad = 0;
  for (std::size_t i = 0; i < valid.size(); ++i) {
    if (valid[i] && std::abs(estimate[i] - ground_truth[i]) >= threshold) ++bad;
  }
  return 100.0 * static_cast<double>(bad) / static_cast<double>(count);
}

double median_scale(std::span<const double> estimate, std::span<const double> ground_truth,
                    const Mask& valid) {
  require_maps(estimate, ground_truth, valid);
  std::vector<double> ratios;
  for (std::size_t i = 0; i < valid.size(); ++i) {
    if (valid[i]) ratios.push_back(ground_truth[i] / estimate[i]);
  }
  if (ratios.empty()) throw Error(ErrorCode::kNoValidPixels, "median scale over an empty valid set");
  const std::size_t mid = ratios.size() / 2;
  std::nth_element(ratios.begin(), ratios.begin() + mid, ratios.end());
  if (ratios.size() % 2 == 1) return ratios[mid];
  const double upper = ratios[mid];
  const double lower = *std::max_element(ratios.begin(), ratios.begin() + mid);
  return 0.5 * (lower + upper);
}

DepthErrors evaluate_depth(std::span<const double> estimate, std::span<const double> ground_truth) {
  if (estimate.size() != ground_truth.size()) {
    throw Error(ErrorCode::kShapeMismatch, "estimate and ground truth differ in size");
  }
  Mask valid(estimate.size(), 0);
  std::size_t count = 0;
  for (std::size_t i = 0; i < estimate.size(); ++i) {
    const bool ok = std::isfinite(estimate[i]) && estimate[i] > 0.0 && std::isfinite(ground_truth[i]) &&
                    ground_truth[i] > 0.0;
    valid[i] = ok ? 1 : 0;
    count += ok ? 1 : 0;
  }
  DepthErrors e;
  e.valid_pixels = count;
  e.scale = median_scale(estimate, ground_truth, valid);
  std::vector<double> scaled(estimate.begin(), estimate.end());
  for (double& v : scaled) v *= e.scale;
  e.rmse = rmse(scaled, ground_truth, valid);
  e.bad_pixel_rate_percent = bad_pixel_rate(scaled, ground_truth, valid);
  return e;
}

Image add_signal_dependent_noise(const Image& image, double sigma, std::uint64_t seed) {
  if (sigma < 0.0) throw Error(ErrorCode::kConfiguration, "noise sigma must be >= 0");
  Image out = image;
  if (sigma == 0.0) return out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (float& v : out.pixels()) {
    const double std = sigma * std::sqrt(std::max(static_cast<double>(v), 0.0));
    const double noisy = v + std * normal(rng);
    v = static_cast<float>(std::clamp(noisy, 0.0, 1.0));
  }
  return out;
}

double psnr(const Image& image, const Image& reference) {
  if (!image.same_shape(reference) || image.empty()) {
    throw Error(ErrorCode::kShapeMismatch, "psnr needs images of equal shape");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < image.data().size(); ++i) {
    const double d = static_cast<double>(image.data()[i]) - reference.data()[i];
    sum += d * d;
  }
  const double mse = sum / static_cast<double>(image.data().size());
  return mse > 0.0 ? 10.0 * std::log10(1.0 / mse) : std::numeric_limits<double>::infinity();
}

}  // namespace burstdepth
