#include "burstdepth/tracking.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "burstdepth/error.hpp"

namespace burstdepth {

void TrackingConfig::validate() const {
  if (!(harris_k > 0.0) || corner_count_target <= 0 || !(min_corner_distance > 0.0) ||
      klt_window <= 0 || pyramid_levels < 1 || !(max_klt_error > 0.0) || min_tracks < 0) {
    throw Error(ErrorCode::kConfiguration, "tracking parameters must be positive");
  }
}

bool FeatureTrack::complete() const {
  return std::all_of(tracked.begin(), tracked.end(), [](std::uint8_t t) { return t != 0; });
}

std::size_t FeatureTrack::lost_at() const {
  const auto it = std::find(tracked.begin(), tracked.end(), std::uint8_t{0});
  return static_cast<std::size_t>(it - tracked.begin());
}

Image histogram_equalize(const Image& image) {
  const Image gray = to_luminance(image);
  std::array<std::size_t, 256> hist{};
  std::vector<std::uint8_t> levels(gray.pixel_count());
  const auto src = gray.pixels();
  for (std::size_t i = 0; i < levels.size(); ++i) {
    const double q = std::round(std::clamp(static_cast<double>(src[i]), 0.0, 1.0) * 255.0);
    levels[i] = static_cast<std::uint8_t>(q);
    ++hist[levels[i]];
  }
  std::array<float, 256> lut{};
  std::size_t cumulative = 0;
  const double n = static_cast<double>(levels.size());
  for (int v = 0; v < 256; ++v) {
    cumulative += hist[v];
    lut[v] = static_cast<float>(std::round(255.0 * cumulative / n) / 255.0);
  }
  Image out(gray.width(), gray.height(), 1);
  auto dst = out.pixels();
  for (std::size_t i = 0; i < levels.size(); ++i) dst[i] = lut[levels[i]];
  return out;
}

namespace {

int clampi(int i, int n) { return std::clamp(i, 0, n - 1); }

// Sobel derivatives with replicated borders (scaled to units of intensity/px).
void sobel(const Image& g, Image& gx, Image& gy) {
  const int w = g.width();
  const int h = g.height();
  gx = Image(w, h, 1);
  gy = Image(w, h, 1);
  for (int y = 0; y < h; ++y) {
    const int ym = clampi(y - 1, h);
    const int yp = clampi(y + 1, h);
    for (int x = 0; x < w; ++x) {
      const int xm = clampi(x - 1, w);
      const int xp = clampi(x + 1, w);
      gx.at(x, y) = (g.at(xp, ym) + 2.0f * g.at(xp, y) + g.at(xp, yp) - g.at(xm, ym) -
                     2.0f * g.at(xm, y) - g.at(xm, yp)) / 8.0f;
      gy.at(x, y) = (g.at(xm, yp) + 2.0f * g.at(x, yp) + g.at(xp, yp) - g.at(xm, ym) -
                     2.0f * g.at(x, ym) - g.at(xp, ym)) / 8.0f;
    }
  }
}

// Clamped-border bilinear lookup for tracking windows that touch the edge.
inline float lookup(const Image& img, double x, double y) {
  const int w = img.width();
  const int h = img.height();
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  const int x0 = std::min(static_cast<int>(x), w - 1);
  const int y0 = std::min(static_cast<int>(y), h - 1);
  const int x1 = std::min(x0 + 1, w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  const float ax = static_cast<float>(x - x0);
  const float ay = static_cast<float>(y - y0);
  const float* d = img.pixels().data();
  const float a = d[static_cast<std::size_t>(y0) * w + x0];
  const float b = d[static_cast<std::size_t>(y0) * w + x1];
  const float c = d[static_cast<std::size_t>(y1) * w + x0];
  const float e = d[static_cast<std::size_t>(y1) * w + x1];
  return (1.0f - ay) * ((1.0f - ax) * a + ax * b) + ay * ((1.0f - ax) * c + ax * e);
}

struct PyramidLevel {
  Image image;
  Image gx;
  Image gy;
};

std::vector<PyramidLevel> build_pyramid(const Image& image, int levels) {
  std::vector<PyramidLevel> pyr;
  Image current = to_luminance(image);
  for (int l = 0; l < levels; ++l) {
    PyramidLevel level;
    level.image = current;
    sobel(level.image, level.gx, level.gy);
    pyr.push_back(std::move(level));
    if (l + 1 < levels) {
      if (current.width() < 16 || current.height() < 16) break;
      current = pyr_down(current);
    }
  }
  return pyr;
}

struct LkResult {
  double x = 0.0;
  double y = 0.0;
  bool ok = false;
};

LkResult track_point(const std::vector<PyramidLevel>& prev, const std::vector<PyramidLevel>& next,
                     double px, double py, const TrackingConfig& cfg) {
  const int half = cfg.klt_window / 2;
  const int side = 2 * half + 1;
  const int n = side * side;
  std::vector<float> tmpl(n);
  std::vector<float> ix(n);
  std::vector<float> iy(n);
  const int levels = static_cast<int>(std::min(prev.size(), next.size()));
  double gx = 0.0;
  double gy = 0.0;
  for (int l = levels - 1; l >= 0; --l) {
    const double scale = std::ldexp(1.0, -l);
    const double cx = px * scale;
    const double cy = py * scale;
    const PyramidLevel& a = prev[l];
    const PyramidLevel& b = next[l];
    double g11 = 0.0, g12 = 0.0, g22 = 0.0;
    for (int j = -half, k = 0; j <= half; ++j) {
      for (int i = -half; i <= half; ++i, ++k) {
        tmpl[k] = lookup(a.image, cx + i, cy + j);
        ix[k] = lookup(a.gx, cx + i, cy + j);
        iy[k] = lookup(a.gy, cx + i, cy + j);
        g11 += ix[k] * ix[k];
        g12 += ix[k] * iy[k];
        g22 += iy[k] * iy[k];
      }
    }
    const double det = g11 * g22 - g12 * g12;
    const double tr = g11 + g22;
    const double min_eig = 0.5 * (tr - std::sqrt(std::max(0.0, tr * tr - 4.0 * det)));
    if (min_eig / n < cfg.klt_min_eigenvalue || det <= 0.0) return {};

    double nx = 0.0;
    double ny = 0.0;
    for (int it = 0; it < cfg.klt_max_iterations; ++it) {
      double b1 = 0.0, b2 = 0.0;
      const double ox = cx + gx + nx;
      const double oy = cy + gy + ny;
      for (int j = -half, k = 0; j <= half; ++j) {
        for (int i = -half; i <= half; ++i, ++k) {
          const double diff = tmpl[k] - lookup(b.image, ox + i, oy + j);
          b1 += diff * ix[k];
          b2 += diff * iy[k];
        }
      }
      const double dx = (g22 * b1 - g12 * b2) / det;
      const double dy = (g11 * b2 - g12 * b1) / det;
      nx += dx;
      ny += dy;
      if (!std::isfinite(nx) || !std::isfinite(ny)) return {};
      if (dx * dx + dy * dy < cfg.klt_epsilon * cfg.klt_epsilon) break;
    }
    gx += nx;
    gy += ny;
    if (l > 0) {
      gx *= 2.0;
      gy *= 2.0;
    }
  }
  const double qx = px + gx;
  const double qy = py + gy;
  const Image& target = next[0].image;
  if (!(qx > 0.0 && qy > 0.0 && qx < target.width() - 1 && qy < target.height() - 1)) return {};

  double err = 0.0;
  for (int j = -half; j <= half; ++j) {
    for (int i = -half; i <= half; ++i) {
      err += std::abs(lookup(prev[0].image, px + i, py + j) - lookup(target, qx + i, qy + j));
    }
  }
  err = 255.0 * err / n;
  if (err > cfg.max_klt_error) return {};
  return {qx, qy, true};
}

}  // namespace

Image harris_response(const Image& gray, double k) {
  Image gx;
  Image gy;
  sobel(gray, gx, gy);
  const int w = gray.width();
  const int h = gray.height();
  Image tensor(w, h, 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const float dx = gx.at(x, y);
      const float dy = gy.at(x, y);
      tensor.at(x, y, 0) = dx * dx;
      tensor.at(x, y, 1) = dx * dy;
      tensor.at(x, y, 2) = dy * dy;
    }
  }
  tensor = gaussian_blur(tensor, 1.0);
  Image response(w, h, 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double a = tensor.at(x, y, 0);
      const double b = tensor.at(x, y, 1);
      const double c = tensor.at(x, y, 2);
      response.at(x, y) = static_cast<float>(a * c - b * b - k * (a + c) * (a + c));
    }
  }
  return response;
}

std::vector<PixelCoord> detect_harris(const Image& image, const TrackingConfig& cfg) {
  cfg.validate();
  const Image gray = to_luminance(image);
  const int w = gray.width();
  const int h = gray.height();
  const int margin = std::max(3, cfg.klt_window / 2 + 1);
  if (w <= 2 * margin || h <= 2 * margin) {
    throw Error(ErrorCode::kConfiguration, "image is smaller than the corner detection window");
  }
  const Image response = harris_response(gray, cfg.harris_k);
  float max_response = 0.0f;
  for (int y = margin; y < h - margin; ++y) {
    for (int x = margin; x < w - margin; ++x) max_response = std::max(max_response, response.at(x, y));
  }
  if (!(max_response > 0.0f)) return {};
  const float threshold = static_cast<float>(cfg.harris_quality) * max_response;

  struct Candidate {
    float score;
    int x;
    int y;
  };
  std::vector<Candidate> candidates;
  for (int y = margin; y < h - margin; ++y) {
    for (int x = margin; x < w - margin; ++x) {
      const float r = response.at(x, y);
      if (r <= threshold) continue;
      bool is_max = true;
      for (int j = -1; j <= 1 && is_max; ++j) {
        for (int i = -1; i <= 1; ++i) {
          if ((i != 0 || j != 0) && response.at(x + i, y + j) > r) {
            is_max = false;
            break;
          }
        }
      }
      if (is_max) candidates.push_back({r, x, y});
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Candidate& a, const Candidate& b) { return a.score > b.score; });

  // Greedy thinning on a coarse grid of accepted corners.
  const double dmin = cfg.min_corner_distance;
  const int cell = std::max(1, static_cast<int>(std::ceil(dmin)));
  const int gw = w / cell + 1;
  const int gh = h / cell + 1;
  std::vector<std::vector<int>> grid(static_cast<std::size_t>(gw) * gh);
  std::vector<PixelCoord> corners;
  for (const Candidate& c : candidates) {
    if (static_cast<int>(corners.size()) >= cfg.corner_count_target) break;
    const int cx = c.x / cell;
    const int cy = c.y / cell;
    bool keep = true;
    for (int j = std::max(0, cy - 1); j <= std::min(gh - 1, cy + 1) && keep; ++j) {
      for (int i = std::max(0, cx - 1); i <= std::min(gw - 1, cx + 1) && keep; ++i) {
        for (int idx : grid[static_cast<std::size_t>(j) * gw + i]) {
          const double dx = corners[idx].u - c.x;
          const double dy = corners[idx].v - c.y;
          if (dx * dx + dy * dy < dmin * dmin) {
            keep = false;
            break;
          }
        }
      }
    }
    if (!keep) continue;
    grid[static_cast<std::size_t>(cy) * gw + cx].push_back(static_cast<int>(corners.size()));
    corners.push_back({static_cast<double>(c.x), static_cast<double>(c.y)});
  }
  return corners;
}

std::vector<FeatureTrack> track_sequence(std::span<const Image> images,
                                         std::span<const PixelCoord> corners,
                                         const TrackingConfig& cfg) {
  cfg.validate();
  if (images.size() < 2) {
    throw Error(ErrorCode::kConfiguration, "tracking needs at least two frames");
  }
  for (const Image& img : images) {
    if (!img.same_size(images[0].width(), images[0].height())) {
      throw Error(ErrorCode::kShapeMismatch, "all frames must share the reference dimensions");
    }
  }
  const std::size_t n = images.size();
  std::vector<FeatureTrack> tracks(corners.size());
  for (std::size_t j = 0; j < corners.size(); ++j) {
    tracks[j].ref_position = corners[j];
    tracks[j].positions.assign(n, PixelCoord{std::nan(""), std::nan("")});
    tracks[j].positions[0] = corners[j];
    tracks[j].tracked.assign(n, 0);
    tracks[j].tracked[0] = 1;
  }

  std::vector<PyramidLevel> prev = build_pyramid(images[0], cfg.pyramid_levels);
  for (std::size_t f = 1; f < n; ++f) {
    std::vector<PyramidLevel> next = build_pyramid(images[f], cfg.pyramid_levels);
#pragma omp parallel for schedule(dynamic, 16)
    for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(tracks.size()); ++j) {
      FeatureTrack& t = tracks[j];
      if (!t.tracked[f - 1]) continue;
      const LkResult r = track_point(prev, next, t.positions[f - 1].u, t.positions[f - 1].v, cfg);
      if (r.ok) {
        t.positions[f] = {r.x, r.y};
        t.tracked[f] = 1;
      }
    }
    prev = std::move(next);
  }

  const auto survivors = static_cast<int>(
      std::count_if(tracks.begin(), tracks.end(), [](const FeatureTrack& t) { return t.complete(); }));
  if (survivors < cfg.min_tracks) {
    throw Error(ErrorCode::kInsufficientTracks,
                std::to_string(survivors) + " full-length tracks, need " +
                    std::to_string(cfg.min_tracks));
  }
  return tracks;
}

std::vector<FeatureTrack> complete_tracks(std::span<const FeatureTrack> tracks) {
  std::vector<FeatureTrack> out;
  for (const FeatureTrack& t : tracks) {
    if (t.complete()) out.push_back(t);
  }
  return out;
}

}  // namespace burstdepth
