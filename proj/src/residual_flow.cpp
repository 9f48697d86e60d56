#include "burstdepth/residual_flow.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "burstdepth/error.hpp"
#include "burstdepth/network.hpp"

namespace burstdepth {

void MatcherConfig::validate() const {
  if (patch < 3 || patch % 2 == 0) throw Error(ErrorCode::kConfiguration, "patch must be odd and >= 3");
  if (window_shift < 0 || window_shift > patch / 2) {
    throw Error(ErrorCode::kConfiguration, "window shift must lie in [0, patch / 2]");
  }
  if (!(search_range >= 0.0) || !(step > 0.0)) {
    throw Error(ErrorCode::kConfiguration, "search range must be >= 0 and step > 0");
  }
}

EstimatorBackend EstimatorBackend::classical(MatcherConfig cfg) {
  EstimatorBackend b;
  b.kind = Kind::kClassical;
  b.matcher = cfg;
  return b;
}

EstimatorBackend EstimatorBackend::learned(std::shared_ptr<const ResidualNetwork> net) {
  if (!net) throw Error(ErrorCode::kConfiguration, "learned backend needs a network");
  EstimatorBackend b;
  b.kind = Kind::kLearned;
  b.network = std::move(net);
  return b;
}

MaskedImage warp_with_flow(const Image& image, const FlowField& flow) {
  if (!image.same_size(flow.width, flow.height)) {
    throw Error(ErrorCode::kShapeMismatch, "flow and image dimensions differ");
  }
  const int w = image.width();
  const int h = image.height();
  const int nc = image.channels();
  MaskedImage out{Image(w, h, nc), Mask(image.pixel_count(), 0)};
  auto dst = out.image.pixels();
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      if (!flow.valid[i]) continue;
      if (sample_bilinear(image, x + flow.du(i), y + flow.dv(i), dst.subspan(i * nc, nc))) {
        out.valid[i] = 1;
      }
    }
  }
  return out;
}

double parabola_vertex(double s_minus, double s_0, double s_plus) {
  const double curvature = s_minus - 2.0 * s_0 + s_plus;
  if (!(curvature < 0.0)) return 0.0;
  return std::clamp(0.5 * (s_minus - s_plus) / curvature, -0.5, 0.5);
}

namespace {

// Sums over the (2r+1)^2 window centred on each pixel for several planes at
// once. Only pixels whose window lies inside the image are written; the rest
// of `out` is left untouched.
template <std::size_t N>
void box_sums(const std::array<const double*, N>& in, int w, int h, int r,
              const std::array<double*, N>& out, std::vector<double>& scratch) {
  const int side = 2 * r + 1;
  if (w < side || h < side) return;
  const std::size_t n = static_cast<std::size_t>(w) * h;
  if (scratch.size() < N * n) scratch.resize(N * n);
  for (std::size_t c = 0; c < N; ++c) {
    double* rows = scratch.data() + c * n;
    for (int y = 0; y < h; ++y) {
      const double* src = in[c] + static_cast<std::size_t>(y) * w;
      double* dst = rows + static_cast<std::size_t>(y) * w;
      double acc = 0.0;
      for (int x = 0; x < side; ++x) acc += src[x];
      dst[r] = acc;
      for (int x = r + 1; x < w - r; ++x) {
        acc += src[x + r] - src[x - r - 1];
        dst[x] = acc;
      }
    }
    double* dst = out[c] + static_cast<std::size_t>(r) * w;
    std::fill(dst + r, dst + w - r, 0.0);
    for (int y = 0; y < side; ++y) {
      const double* src = rows + static_cast<std::size_t>(y) * w;
      for (int x = r; x < w - r; ++x) dst[x] += src[x];
    }
    for (int y = r + 1; y < h - r; ++y) {
      const double* add = rows + static_cast<std::size_t>(y + r) * w;
      const double* sub = rows + static_cast<std::size_t>(y - r - 1) * w;
      const double* prev = out[c] + static_cast<std::size_t>(y - 1) * w;
      double* cur = out[c] + static_cast<std::size_t>(y) * w;
      for (int x = r; x < w - r; ++x) cur[x] = prev[x] + add[x] - sub[x];
    }
  }
}

}  // namespace

FlowField constrained_match(const Image& reference, const Image& target, const FlowField& v_init,
                            const TransformVector& T, const MatcherConfig& cfg,
                            const Mask* target_valid) {
  cfg.validate();
  if (T.degenerate()) {
    throw Error(ErrorCode::kDegenerateBaseline, "constrained matching needs a nonzero baseline");
  }
  const int w = reference.width();
  const int h = reference.height();
  if (!target.same_size(w, h) || v_init.width != w || v_init.height != h) {
    throw Error(ErrorCode::kShapeMismatch, "matcher inputs must share dimensions");
  }
  if (target_valid && target_valid->size() != target.pixel_count()) {
    throw Error(ErrorCode::kShapeMismatch, "target mask size differs from the target");
  }
  const std::size_t n = reference.pixel_count();
  const Image a_img = to_luminance(reference);
  const Image b_img = to_luminance(target);
  const int r = cfg.patch / 2;
  const double count = static_cast<double>(cfg.patch) * cfg.patch;
  const double dir_x = T.tx / T.norm();
  const double dir_y = T.ty / T.norm();

  // Split the initial flow into its component along T (the search centre) and
  // the perpendicular remainder, which is carried along unchanged.
  std::vector<double> along(n, 0.0);
  std::vector<double> across(n, 0.0);
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    if (!v_init.valid[i]) continue;
    along[i] = v_init.du(i) * dir_x + v_init.dv(i) * dir_y;
    across[i] = -v_init.du(i) * dir_y + v_init.dv(i) * dir_x;
    lo = std::min(lo, along[i]);
    hi = std::max(hi, along[i]);
  }
  FlowField residual(w, h);
  if (!(lo <= hi) || w < cfg.patch || h < cfg.patch) {
    for (std::size_t i = 0; i < n; ++i) residual.invalidate(i);
    return residual;
  }

  std::vector<double> scratch;
  std::vector<double> a(n);
  std::vector<double> aa(n);
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = a_img.pixels()[i];
    aa[i] = a[i] * a[i];
  }
  std::vector<double> sum_a(n, 0.0);
  std::vector<double> sum_var_a(n, 0.0);
  box_sums<2>({a.data(), aa.data()}, w, h, r, {sum_a.data(), sum_var_a.data()}, scratch);
  for (std::size_t i = 0; i < n; ++i) sum_var_a[i] -= sum_a[i] * sum_a[i] / count;
  const int shift = cfg.window_shift;
  const auto b_pix = b_img.pixels();

  // Global sweep over displacements d along T; every pixel only considers
  // the d within search_range of its own initial displacement. A candidate
  // shifts the whole patch rigidly, so neighbours' flows never leak in.
  const double d_first = std::floor((lo - cfg.search_range) / cfg.step) * cfg.step;
  const int candidates = static_cast<int>(std::floor((hi + cfg.search_range - d_first) / cfg.step + 1e-9)) + 1;
  constexpr float kNoScore = -std::numeric_limits<float>::infinity();
  std::vector<float> best(n, kNoScore);
  std::vector<int> best_k(n, -1);
  std::vector<float> left(n, kNoScore);
  std::vector<float> right(n, kNoScore);
  std::vector<float> previous(n, kNoScore);
  std::vector<float> current(n, kNoScore);
  // Never written outside the interior, so the window-shift max below needs
  // no bounds checks (shift <= r).
  std::vector<float> ncc(n, kNoScore);
  std::vector<float> row_max(n, kNoScore);
  // A window cut short by the frame (or the target mask) may hide the true
  // match, so such pixels are masked rather than trusted.
  std::vector<std::uint8_t> truncated(n, 0);
  const double tolerance = 1e-9 * std::max(1.0, cfg.search_range);

  const double min_var = count * cfg.min_patch_std * cfg.min_patch_std;
  std::vector<double> b(n);
  std::vector<double> bb(n);
  std::vector<double> ab(n);
  std::vector<double> missing(n);
  std::vector<double> sum_b(n, 0.0), sum_bb(n, 0.0), sum_ab(n, 0.0), sum_missing(n, 0.0);
  for (int k = 0; k < candidates; ++k) {
    const double d = d_first + k * cfg.step;
#pragma omp parallel for schedule(static)
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        const double sx = x + d * dir_x - across[i] * dir_y;
        const double sy = y + d * dir_y + across[i] * dir_x;
        bool ok = v_init.valid[i] && sx >= 0.0 && sy >= 0.0 && sx <= w - 1 && sy <= h - 1;
        double value = 0.0;
        if (ok) {
          const int x0 = std::min(static_cast<int>(sx), w - 2);
          const int y0 = std::min(static_cast<int>(sy), h - 2);
          const double fx = sx - x0;
          const double fy = sy - y0;
          const std::size_t j = static_cast<std::size_t>(y0) * w + x0;
          if (target_valid) {
            const Mask& tv = *target_valid;
            ok = tv[j] && tv[j + 1] && tv[j + w] && tv[j + w + 1];
          }
          const double top = b_pix[j] + fx * (b_pix[j + 1] - b_pix[j]);
          const double bottom = b_pix[j + w] + fx * (b_pix[j + w + 1] - b_pix[j + w]);
          value = ok ? top + fy * (bottom - top) : 0.0;
        }
        b[i] = value;
        bb[i] = value * value;
        ab[i] = a[i] * value;
        missing[i] = ok ? 0.0 : 1.0;
      }
    }
    box_sums<4>({b.data(), bb.data(), ab.data(), missing.data()}, w, h, r,
                {sum_b.data(), sum_bb.data(), sum_ab.data(), sum_missing.data()}, scratch);
    for (int y = r; y < h - r; ++y) {
      for (int x = r; x < w - r; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        float score = kNoScore;
        if (sum_missing[i] < 0.5 && sum_var_a[i] >= min_var) {
          const double var_b = sum_bb[i] - sum_b[i] * sum_b[i] / count;
          if (var_b >= min_var) {
            const double cov = sum_ab[i] - sum_a[i] * sum_b[i] / count;
            score = static_cast<float>(cov / std::sqrt(sum_var_a[i] * var_b));
          }
        }
        ncc[i] = score;
      }
    }
    // Best of the windows that still contain the pixel, so a patch can slide
    // off a depth edge instead of straddling it. The 3x3 offset grid is
    // separable into a row and a column max.
    const std::vector<float>* shifted = &ncc;
    if (shift > 0) {
      for (int y = r - shift; y < h - r + shift; ++y) {
        for (int x = r; x < w - r; ++x) {
          const std::size_t i = static_cast<std::size_t>(y) * w + x;
          row_max[i] = std::max({ncc[i - shift], ncc[i], ncc[i + shift]});
        }
      }
      shifted = &row_max;
    }
    const std::size_t col = static_cast<std::size_t>(shift) * w;
    for (int y = r; y < h - r; ++y) {
      for (int x = r; x < w - r; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        float score = kNoScore;
        if (v_init.valid[i] && std::abs(d - along[i]) <= cfg.search_range + tolerance) {
          if (sum_missing[i] > 0.5) {
            truncated[i] = 1;
          } else if (sum_var_a[i] >= min_var) {
            const std::vector<float>& m = *shifted;
            score = std::max({m[i - col], m[i], m[i + col]});
          }
        }
        current[i] = score;
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (best_k[i] == k - 1) right[i] = current[i];
      if (current[i] > best[i]) {
        best[i] = current[i];
        best_k[i] = k;
        left[i] = previous[i];
        right[i] = kNoScore;
      }
    }
    std::swap(previous, current);
  }

  for (std::size_t i = 0; i < n; ++i) {
    if (best_k[i] < 0 || truncated[i] || best[i] < cfg.ncc_threshold) {
      residual.invalidate(i);
      continue;
    }
    // Scores at the window edge are missing; such optima are kept unrefined.
    double offset = 0.0;
    if (left[i] != kNoScore && right[i] != kNoScore) offset = parabola_vertex(left[i], best[i], right[i]);
    const double delta = d_first + (best_k[i] + offset) * cfg.step - along[i];
    residual.set(i, delta * dir_x, delta * dir_y);
  }
  return residual;
}

FlowField estimate_residual(const ResidualFlowInput& input, const EstimatorBackend& backend) {
  if (backend.kind == EstimatorBackend::Kind::kClassical) {
    return constrained_match(input.reference, input.target, input.initial_flow, input.transform,
                             backend.matcher, input.target_valid);
  }
  if (!backend.network) throw Error(ErrorCode::kConfiguration, "learned backend has no network");
  const FeatureMap<float> stacked =
      make_network_input(input.reference, input.warped, input.initial_flow);
  const FeatureMap<float> out = backend.network->forward(stacked);
  FlowField residual = network_output_to_flow(out);
  for (std::size_t i = 0; i < residual.size(); ++i) {
    if (!input.initial_flow.valid[i]) residual.invalidate(i);
  }
  return residual;
}

}  // namespace burstdepth
