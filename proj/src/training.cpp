#include "burstdepth/training.hpp"

#include <Eigen/LU>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>

#include "burstdepth/error.hpp"
#include "burstdepth/residual_flow.hpp"
#include "burstdepth/synthetic.hpp"

namespace burstdepth {

Eigen::Vector2d AffineMotion::inverse(const Eigen::Vector2d& q) const {
  return A.inverse() * (q - center - b) + center;
}

AffineMotion AffineMotion::conjugate(const Eigen::Matrix2d& M) const {
  AffineMotion out;
  out.A = M * A * M.inverse();
  out.b = M * b;
  out.center = center;
  return out;
}

FlowField AffineMotion::flow(int width, int height) const {
  FlowField f(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const Eigen::Vector2d p(x, y);
      const Eigen::Vector2d d = apply(p) - p;
      f.set(f.index(x, y), d.x(), d.y());
    }
  }
  return f;
}

FlowSample render_affine_sample(int width, int height, const AffineMotion& motion,
                                std::uint64_t texture_seed, double initial_fraction,
                                double texture_cell) {
  FlowSample s;
  s.reference = Image(width, height, 3);
  s.target = Image(width, height, 3);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const auto ref = procedural_texture(x, y, texture_cell, texture_seed);
      const Eigen::Vector2d src = motion.inverse(Eigen::Vector2d(x, y));
      const auto tgt = procedural_texture(src.x(), src.y(), texture_cell, texture_seed);
      for (int c = 0; c < 3; ++c) {
        s.reference.at(x, y, c) = ref[c];
        s.target.at(x, y, c) = tgt[c];
      }
    }
  }
  s.flow = motion.flow(width, height);
  s.initial_flow = s.flow;
  for (double& v : s.initial_flow.data) v *= initial_fraction;
  return s;
}

std::vector<FlowSample> make_toy_dataset(const ToyDatasetConfig& cfg) {
  if (cfg.samples <= 0 || cfg.width < 8 || cfg.height < 8) {
    throw Error(ErrorCode::kConfiguration, "toy dataset needs samples > 0 and images >= 8x8");
  }
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  std::vector<FlowSample> data;
  data.reserve(cfg.samples);
  for (int k = 0; k < cfg.samples; ++k) {
    AffineMotion m;
    m.center = {0.5 * (cfg.width - 1), 0.5 * (cfg.height - 1)};
    for (int i = 0; i < 4; ++i) m.A.data()[i] += cfg.max_deformation * unit(rng);
    const double a = angle(rng);
    const double r = cfg.max_translation * std::abs(unit(rng));
    m.b = {r * std::cos(a), r * std::sin(a)};
    const std::uint64_t texture_seed = rng();
    data.push_back(render_affine_sample(cfg.width, cfg.height, m, texture_seed, cfg.initial_fraction,
                                        cfg.texture_cell));
  }
  return data;
}

namespace {

bool sample_flow(const FlowField& f, double x, double y, double* du, double* dv) {
  if (!(x >= 0.0 && y >= 0.0 && x <= f.width - 1 && y <= f.height - 1)) return false;
  const int x0 = std::min(static_cast<int>(x), f.width - 1);
  const int y0 = std::min(static_cast<int>(y), f.height - 1);
  const int x1 = std::min(x0 + 1, f.width - 1);
  const int y1 = std::min(y0 + 1, f.height - 1);
  const double ax = x - x0;
  const double ay = y - y0;
  const std::size_t i00 = f.index(x0, y0), i10 = f.index(x1, y0), i01 = f.index(x0, y1),
                    i11 = f.index(x1, y1);
  if (!f.valid[i00] || !f.valid[i10] || !f.valid[i01] || !f.valid[i11]) return false;
  auto lerp = [&](int c) {
    const double top = (1.0 - ax) * f.data[2 * i00 + c] + ax * f.data[2 * i10 + c];
    const double bottom = (1.0 - ax) * f.data[2 * i01 + c] + ax * f.data[2 * i11 + c];
    return (1.0 - ay) * top + ay * bottom;
  };
  *du = lerp(0);
  *dv = lerp(1);
  return true;
}

void jitter(Image& image, double brightness, double contrast, double saturation) {
  const Image gray = to_luminance(image);
  double mean = 0.0;
  for (float v : gray.pixels()) mean += v;
  mean /= static_cast<double>(std::max<std::size_t>(gray.pixel_count(), 1));
  const int nc = image.channels();
  for (std::size_t i = 0; i < image.pixel_count(); ++i) {
    for (int c = 0; c < nc; ++c) {
      double v = image.data()[i * nc + c];
      v = gray.data()[i] + (v - gray.data()[i]) * saturation;
      v = mean + (v - mean) * contrast;
      v *= brightness;
      image.data()[i * nc + c] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
}

}  // namespace

FlowSample rotate_scale_sample(const FlowSample& sample, double theta, double scale) {
  if (!(scale > 0.0)) throw Error(ErrorCode::kConfiguration, "scale must be > 0");
  const int w = sample.reference.width();
  const int h = sample.reference.height();
  const Eigen::Vector2d c(0.5 * (w - 1), 0.5 * (h - 1));
  Eigen::Matrix2d M;
  M << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
  M *= scale;
  const Eigen::Matrix2d M_inv = M.inverse();

  FlowSample out;
  out.reference = Image(w, h, sample.reference.channels());
  out.target = Image(w, h, sample.target.channels());
  out.flow = FlowField(w, h);
  out.initial_flow = FlowField(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = std::size_t(y) * w + x;
      const Eigen::Vector2d q = M_inv * (Eigen::Vector2d(x, y) - c) + c;
      const int nr = out.reference.channels();
      const bool inside =
          sample_bilinear(sample.reference, q.x(), q.y(), out.reference.pixels().subspan(i * nr, nr));
      const int nt = out.target.channels();
      sample_bilinear(sample.target, q.x(), q.y(), out.target.pixels().subspan(i * nt, nt));
      double du = 0.0, dv = 0.0;
      if (inside && sample_flow(sample.flow, q.x(), q.y(), &du, &dv)) {
        const Eigen::Vector2d v = M * Eigen::Vector2d(du, dv);
        out.flow.set(i, v.x(), v.y());
      } else {
        out.flow.invalidate(i);
      }
      if (inside && sample_flow(sample.initial_flow, q.x(), q.y(), &du, &dv)) {
        const Eigen::Vector2d v = M * Eigen::Vector2d(du, dv);
        out.initial_flow.set(i, v.x(), v.y());
      } else {
        out.initial_flow.invalidate(i);
      }
    }
  }
  return out;
}

AugmentationConfig AugmentationConfig::none() {
  AugmentationConfig cfg;
  cfg.spatial = false;
  cfg.chromatic = false;
  cfg.noise = false;
  return cfg;
}

FlowSample augment(const FlowSample& sample, const AugmentationConfig& cfg, std::mt19937_64& rng) {
  if (!cfg.any()) return sample;
  FlowSample out;
  if (cfg.spatial) {
    std::uniform_real_distribution<double> rot(-cfg.max_rotation_deg, cfg.max_rotation_deg);
    std::uniform_real_distribution<double> scale(cfg.min_scale, cfg.max_scale);
    const double theta = rot(rng) * std::numbers::pi / 180.0;
    out = rotate_scale_sample(sample, theta, scale(rng));
  } else {
    out = sample;
  }
  if (cfg.chromatic) {
    std::normal_distribution<double> jit(0.0, cfg.jitter_std);
    auto draw = [&] {
      std::array<double, 3> f{};
      for (double& v : f) v = std::max(0.0, 1.0 + jit(rng));
      return f;
    };
    const auto ref = draw();
    const auto tgt = cfg.independent_jitter ? draw() : ref;
    jitter(out.reference, ref[0], ref[1], ref[2]);
    jitter(out.target, tgt[0], tgt[1], tgt[2]);
  }
  if (cfg.noise) {
    std::normal_distribution<double> level(0.0, cfg.noise_sigma);
    std::normal_distribution<double> unit(0.0, 1.0);
    for (Image* img : {&out.reference, &out.target}) {
      const double sigma = std::abs(level(rng));
      for (float& v : img->pixels()) v = static_cast<float>(std::clamp(v + sigma * unit(rng), 0.0, 1.0));
    }
  }
  return out;
}

FeatureMap<float> sample_input(const FlowSample& sample) {
  const MaskedImage warped = warp_with_flow(sample.target, sample.initial_flow);
  return make_network_input(sample.reference, warped.image, sample.initial_flow);
}

FlowField residual_target(const FlowSample& sample) {
  FlowField r(sample.flow.width, sample.flow.height);
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (sample.flow.valid[i] && sample.initial_flow.valid[i]) {
      r.set(i, sample.flow.du(i) - sample.initial_flow.du(i), sample.flow.dv(i) - sample.initial_flow.dv(i));
    } else {
      r.invalidate(i);
    }
  }
  return r;
}

void TrainingConfig::validate() const {
  if (iterations < 0 || batch < 1) throw Error(ErrorCode::kConfiguration, "iterations >= 0 and batch >= 1");
  if (!(learning_rate > 0.0) || !(decayed_learning_rate > 0.0) || !(fine_tune_learning_rate > 0.0)) {
    throw Error(ErrorCode::kConfiguration, "learning rates must be > 0");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw Error(ErrorCode::kConfiguration, "ADAM betas must lie in [0, 1)");
  }
}

double residual_epe(const ConvNet<float>& net, std::span<const FlowSample> samples) {
  if (samples.empty()) throw Error(ErrorCode::kNoValidPixels, "no samples to score");
  double sum = 0.0;
  for (const FlowSample& s : samples) {
    const FlowField predicted = network_output_to_flow(net.forward(sample_input(s)));
    sum += epe_loss(predicted, residual_target(s));
  }
  return sum / static_cast<double>(samples.size());
}

TrainingReport train_toy(ConvNet<float>& net, std::span<const FlowSample> dataset,
                         const TrainingConfig& cfg) {
  cfg.validate();
  if (dataset.empty()) throw Error(ErrorCode::kConfiguration, "training needs a nonempty dataset");
  const auto start = std::chrono::steady_clock::now();
  const std::span<const FlowSample> eval =
      dataset.first(std::clamp<std::size_t>(cfg.eval_samples, 1, dataset.size()));
  TrainingReport report;
  report.initial_epe = residual_epe(net, eval);

  AugmentationConfig aug = cfg.augmentation;
  if (cfg.fine_tune) aug.independent_jitter = true;
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> pick(0, dataset.size() - 1);
  std::vector<float>& params = net.parameters();
  std::vector<double> m(params.size(), 0.0);
  std::vector<double> v(params.size(), 0.0);
  std::vector<float> grad;
  ConvNet<float>::Trace trace;
  FeatureMap<float> grad_out;

  for (int it = 0; it < cfg.iterations; ++it) {
    grad.assign(params.size(), 0.0f);
    double loss = 0.0;
    int used = 0;
    for (int b = 0; b < cfg.batch; ++b) {
      const FlowSample s = augment(dataset[pick(rng)], aug, rng);
      const FlowField target = residual_target(s);
      if (std::none_of(target.valid.begin(), target.valid.end(), [](auto x) { return x != 0; })) continue;
      const FeatureMap<float> out = net.forward(sample_input(s), &trace);
      loss += epe_loss_with_gradient(out, target, &grad_out);
      net.backward(trace, grad_out, grad);
      ++used;
    }
    if (used == 0) continue;
    loss /= used;
    report.loss.push_back(loss);
    if (!std::isfinite(loss)) report.finite = false;

    const double epoch = static_cast<double>(it) * cfg.batch / static_cast<double>(dataset.size());
    const double lr = cfg.fine_tune ? cfg.fine_tune_learning_rate
                      : epoch >= cfg.decay_after_epochs ? cfg.decayed_learning_rate
                                                        : cfg.learning_rate;
    const double bias1 = 1.0 - std::pow(cfg.beta1, it + 1);
    const double bias2 = 1.0 - std::pow(cfg.beta2, it + 1);
    for (std::size_t k = 0; k < params.size(); ++k) {
      const double g = grad[k] / used;
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g;
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g * g;
      params[k] -= static_cast<float>(lr * (m[k] / bias1) / (std::sqrt(v[k] / bias2) + cfg.adam_epsilon));
    }
  }
  report.final_epe = residual_epe(net, eval);
  if (!std::isfinite(report.final_epe)) report.finite = false;
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace burstdepth
