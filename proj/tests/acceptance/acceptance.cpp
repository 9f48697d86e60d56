// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "burstdepth/applications.hpp"
#include "burstdepth/bundle_adjustment.hpp"
#include "burstdepth/geometry.hpp"
#include "burstdepth/network.hpp"
#include "burstdepth/pipeline.hpp"
#include "burstdepth/synthetic.hpp"
#include "burstdepth/training.hpp"
#include "oracles.hpp"

using namespace burstdepth;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string format(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::vector<double> as_doubles(const Image& depth) { return {depth.pixels().begin(), depth.pixels().end()}; }

// ---------------------------------------------------------------------------

Outcome geometry_round_trip() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> unit(0.0, 1.0), norm(0.1, 20.0), angle(-M_PI, M_PI);
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    InverseDepthMap w(1, 1, unit(rng));
    const double n = norm(rng), a = angle(rng);
    const TransformVector T{n * std::cos(a), n * std::sin(a)};
    const InverseDepthMap back = inverse_depth_from_flow(flow_from_inverse_depth(w, T), T);
    if (!back.valid[0]) return {false, "sample masked"};
    worst = std::max(worst, std::abs(back.data[0] - w.data[0]));
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-12 && secs < 1.0, format("max error %.2e over 1000 samples, %.3f s", worst, secs)};
}

Outcome parameter_count() {
  const std::size_t n = NetworkSpec::residual_flow().parameter_count();
  const std::size_t built = ConvNet<float>().parameter_count();
  return {n == 240050 && built == n, format("%zu parameters", built)};
}

double aligned_translation_error(const std::vector<SmallPose>& est, const std::vector<SmallPose>& truth) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    num += est[i].t.dot(truth[i].t);
    den += est[i].t.squaredNorm();
  }
  const double s = den > 0 ? num / den : 0.0;
  double worst = 0.0;
  for (std::size_t i = 0; i < est.size(); ++i) worst = std::max(worst, (s * est[i].t - truth[i].t).norm());
  return worst;
}

Outcome bundle_recovery() {
  const auto t0 = Clock::now();
  double worst_t = 0.0, worst_r = 0.0, worst_rms = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SyntheticBundleOptions opt;  // 10 frames, 300 points, |r| <= 0.01, |t| <= 0.02 min depth
    const SyntheticBundle b = make_synthetic_bundle(opt, 1000 + seed);
    const BundleSolution sol = solve_lm(b.problem);
    double baseline = 0.0;
    for (const auto& p : b.poses) baseline = std::max(baseline, p.t.norm());
    worst_t = std::max(worst_t, aligned_translation_error(sol.poses, b.poses) / baseline);
    for (std::size_t i = 0; i < sol.poses.size(); ++i) worst_r = std::max(worst_r, (sol.poses[i].r - b.poses[i].r).norm());
    worst_rms = std::max(worst_rms, sol.final_rms_reprojection);
  }
  const double secs = seconds_since(t0);
  return {worst_t < 0.01 && worst_r < 1e-4 && worst_rms < 1e-3 && secs < 30.0,
          format("worst translation %.2e of baseline, rotation %.2e rad, rms %.2e px, %.1f s", worst_t, worst_r,
                 worst_rms, secs)};
}

Outcome jacobian_check() {
  double worst = 0.0;
  int checked = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SyntheticBundleOptions opt;
    opt.frames = 5;
    opt.points = 12;
    const SyntheticBundle b = make_synthetic_bundle(opt, 500 + seed);
    const int n = b.problem.frame_count();
    // Evaluate away from the solution so every block is exercised.
    Eigen::VectorXd x(b.problem.parameter_count());
    for (int i = 0; i < n; ++i) {
      x.segment<3>(6 * i) = b.poses[i].r * 1.3;
      x.segment<3>(6 * i + 3) = b.poses[i].t * 0.8;
    }
    for (int j = 0; j < b.problem.point_count(); ++j) x.segment<3>(6 * n + 3 * j) = b.points[j] * 1.05;
    const Eigen::MatrixXd J = Eigen::MatrixXd(analytic_jacobian(x, b.problem));
    std::mt19937 rng(static_cast<unsigned>(seed));
    for (int k = 0; k < 20;) {
      const int row = std::uniform_int_distribution<int>(0, int(J.rows()) - 1)(rng);
      const int col = std::uniform_int_distribution<int>(6, int(J.cols()) - 1)(rng);
      if (J(row, col) == 0.0) continue;
      const double h = 1e-6 * std::max(1.0, std::abs(x(col)));
      const double fd = oracle::central_difference(
          [&](const Eigen::VectorXd& p) { return residuals(p, b.problem)(row); }, x, col, h);
      worst = std::max(worst, std::abs(J(row, col) - fd) / std::max(std::abs(fd), 1e-3));
      ++k, ++checked;
    }
  }
  return {checked == 100 && worst < 1e-4, format("%d entries, max relative error %.2e", checked, worst)};
}

struct SceneRun {
  DepthErrors errors;
  double seconds = 0.0;
  double max_depth = 0.0;
};

SceneRun run_scene(const SceneOptions& opt) {
  const SyntheticScene scene = make_default_scene(opt);
  const RenderedBurst burst = render(scene);
  const auto t0 = Clock::now();
  const PipelineResult r = run(burst.frames, scene.K, PipelineConfig{});
  SceneRun out;
  out.seconds = seconds_since(t0);
  out.errors = evaluate_depth(r.depth, as_doubles(burst.depth));
  out.max_depth = scene.max_depth();
  return out;
}

// The default scene runs are shared by several criteria.
struct SceneRuns {
  SceneRun clean, noisy_02, noisy_05, exposure;
};

SceneRuns& scene_runs() {
  static SceneRuns runs = [] {
    SceneRuns r;
    SceneOptions opt;
    r.clean = run_scene(opt);
    opt.noise_sigma = 0.02;
    r.noisy_02 = run_scene(opt);
    opt.noise_sigma = 0.05;
    r.noisy_05 = run_scene(opt);
    opt = {};
    opt.exposure_levels = 7;
    r.exposure = run_scene(opt);
    return r;
  }();
  return runs;
}

Outcome end_to_end() {
  const SceneRun& r = scene_runs().clean;
  const double rel = r.errors.rmse / r.max_depth;
  return {rel < 0.05 && r.errors.bad_pixel_rate_percent < 5.0 && r.seconds < 60.0,
          format("rmse %.4f (%.2f%% of max depth), bad %.2f%%, %zu pixels, %.1f s", r.errors.rmse, 100 * rel,
                 r.errors.bad_pixel_rate_percent, r.errors.valid_pixels, r.seconds)};
}

Outcome noise_trend() {
  const SceneRuns& s = scene_runs();
  const double a = s.clean.errors.rmse, b = s.noisy_02.errors.rmse, c = s.noisy_05.errors.rmse;
  return {a <= b && b <= c && c < 3.0 * a,
          format("rmse sigma 0 / 0.02 / 0.05 = %.4f / %.4f / %.4f (bad %.2f / %.2f / %.2f %%)", a, b, c,
                 s.clean.errors.bad_pixel_rate_percent, s.noisy_02.errors.bad_pixel_rate_percent,
                 s.noisy_05.errors.bad_pixel_rate_percent)};
}

Outcome exposure_robustness() {
  const SceneRuns& s = scene_runs();
  return {s.exposure.errors.rmse < 2.0 * s.clean.errors.rmse,
          format("rmse with 7 exposure levels %.4f vs constant %.4f", s.exposure.errors.rmse, s.clean.errors.rmse)};
}

Outcome toy_training() {
  const auto t0 = Clock::now();
  const std::vector<FlowSample> data = make_toy_dataset();  // 500 samples of 64x64
  ConvNet<float> net;
  net.init_he(1, 0.1);
  TrainingConfig cfg;  // 200 iterations, ADAM 0.9 / 0.999, lr 1e-4
  cfg.augmentation = AugmentationConfig::none();
  const TrainingReport rep = train_toy(net, data, cfg);
  const double zero_output =
      residual_epe(ConvNet<float>(), std::span<const FlowSample>(data).first(std::size_t(cfg.eval_samples)));
  const double secs = seconds_since(t0);
  return {rep.finite && rep.final_epe < 0.5 * rep.initial_epe && secs < 600.0,
          format("epe %.4f -> %.4f (ratio %.3f, zero-output baseline %.4f), %d iterations, %.0f s", rep.initial_epe,
                 rep.final_epe, rep.final_epe / rep.initial_epe, zero_output, int(rep.loss.size()), secs)};
}

Outcome augmentation_equivariance() {
  const int size = 64;
  AffineMotion m;
  m.A << std::cos(0.01) * 1.02, -std::sin(0.01), std::sin(0.01), std::cos(0.01) * 0.98;
  m.b = {1.0, -1.5};
  m.center = {(size - 1) / 2.0, (size - 1) / 2.0};
  const FlowSample s = render_affine_sample(size, size, m, 5, 0.5, 4.0);
  double worst = 0.0;
  int checked = 0;
  for (double deg : {17.0, -17.0}) {
    const double theta = deg * M_PI / 180.0;
    Eigen::Matrix2d M;
    M << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
    const FlowSample r = rotate_scale_sample(s, theta, 1.0);
    const FlowField expected = m.conjugate(M).flow(size, size);
    for (int y = 12; y < size - 12; ++y) {
      for (int x = 12; x < size - 12; ++x) {
        const std::size_t i = r.flow.index(x, y);
        if (!r.flow.valid[i]) continue;
        worst = std::max({worst, std::abs(r.flow.du(i) - expected.du(i)), std::abs(r.flow.dv(i) - expected.dv(i))});
        ++checked;
      }
    }
  }
  return {checked > 2000 && worst < 1e-4, format("%d interior pixels, max deviation %.2e px", checked, worst)};
}

Outcome metric_oracles() {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> depth(1.0, 5.0);
  std::normal_distribution<double> noise(0.0, 0.3);
  std::bernoulli_distribution keep(0.9);
  int mismatches = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> gt(256), est(256);
    Mask valid(256);
    std::vector<bool> vb(256);
    for (int i = 0; i < 256; ++i) {
      gt[i] = depth(rng);
      est[i] = gt[i] + noise(rng);
      vb[i] = i == 0 || keep(rng);
      valid[i] = vb[i];
    }
    if (rmse(est, gt, valid) != oracle::naive_rmse(est, gt, vb)) ++mismatches;
    if (bad_pixel_rate(est, gt, valid) != oracle::naive_bad_rate(est, gt, vb)) ++mismatches;
  }
  // Threshold 0.1 * max gt = 4: an error of exactly 4 is bad, 3.9 is not.
  const std::vector<double> gt{10, 20, 30, 40};
  const Mask all(4, 1);
  const bool hand = bad_pixel_rate(gt, gt, all) == 0.0 && rmse(gt, gt, all) == 0.0 &&
                    bad_pixel_rate(std::vector<double>{14, 23.9, 30, 40}, gt, all) == 25.0 &&
                    bad_pixel_rate(std::vector<double>{10, 20, 30, 35}, gt, all) == 25.0 &&
                    rmse(std::vector<double>{11, 21, 31, 41}, gt, all) == 1.0;
  return {mismatches == 0 && hand, format("%d mismatches in 100 random 16x16 pairs, hand cases %s", mismatches,
                                          hand ? "ok" : "wrong")};
}

Outcome denoise_gain() {
  SceneOptions opt;
  opt.width = 320;
  opt.height = 240;
  opt.frames = 10;
  opt.K = {260, 260, 159.5, 119.5};
  opt.near_u0 = 50, opt.near_v0 = 40, opt.near_u1 = 190, opt.near_v1 = 200;
  opt.noise_sigma = 0.02;
  const SyntheticScene scene = make_default_scene(opt);
  const RenderedBurst burst = render(scene);
  InverseDepthMap w(scene.width, scene.height);
  for (std::size_t i = 0; i < w.size(); ++i) w.data[i] = 1.0 / burst.depth.pixels()[i];
  const AlignedBurst aligned = align_to_reference(burst.frames, scene.K, scene.poses, w);
  const Image out = denoise_weighted_average(aligned);
  const double before = psnr(burst.frames[0], burst.clean_frames[0]);
  const double after = psnr(out, burst.clean_frames[0]);
  return {after >= before + 3.0, format("psnr %.2f dB -> %.2f dB (+%.2f dB)", before, after, after - before)};
}

Outcome timing() {
  const SceneRun& r = scene_runs().clean;
  return {r.seconds < 30.0, format("default 28-frame 640x480 burst in %.1f s", r.seconds)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"geometry round trip", geometry_round_trip},
      {"network parameter count", parameter_count},
      {"bundle adjustment recovery", bundle_recovery},
      {"jacobian vs finite differences", jacobian_check},
      {"end-to-end synthetic depth", end_to_end},
      {"noise robustness trend", noise_trend},
      {"exposure robustness", exposure_robustness},
      {"toy training", toy_training},
      {"augmentation equivariance", augmentation_equivariance},
      {"metric oracles", metric_oracles},
      {"denoise gain", denoise_gain},
      {"timing", timing},
  };
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("[%s] %2zu %-32s %s\n", o.pass ? "PASS" : "FAIL", k + 1, criteria[k].first, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
