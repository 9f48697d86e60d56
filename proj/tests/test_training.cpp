#include <gtest/gtest.h>

#include <cmath>

#include "burstdepth/error.hpp"
#include "burstdepth/training.hpp"

using namespace burstdepth;

namespace {

FlowSample affine_sample(int size, double angle, double tx, double ty) {
  AffineMotion m;
  m.A << std::cos(angle) * 1.02, -std::sin(angle), std::sin(angle), std::cos(angle) * 0.98;
  m.b = {tx, ty};
  m.center = {(size - 1) / 2.0, (size - 1) / 2.0};
  return render_affine_sample(size, size, m, 5, 0.5, 4.0);
}

Eigen::Matrix2d rotation(double theta, double scale) {
  Eigen::Matrix2d M;
  M << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
  return scale * M;
}

}  // namespace

TEST(AffineMotion, InverseAndFlow) {
  AffineMotion m;
  m.A << 1.01, 0.02, -0.03, 0.99;
  m.b = {1.5, -0.5};
  m.center = {10, 8};
  const Eigen::Vector2d p(3, 4);
  EXPECT_TRUE(m.inverse(m.apply(p)).isApprox(p, 1e-12));
  const FlowField f = m.flow(20, 16);
  const Eigen::Vector2d q = m.apply({7, 5}) - Eigen::Vector2d(7, 5);
  EXPECT_NEAR(f.du(f.index(7, 5)), q.x(), 1e-12);
  EXPECT_NEAR(f.dv(f.index(7, 5)), q.y(), 1e-12);
}

TEST(AffineSample, ReferenceMatchesTargetAlongFlow) {
  const FlowSample s = affine_sample(48, 0.01, 1.2, -0.7);
  // reference(p) = target(p + flow(p)) up to bilinear resampling of a smooth texture.
  double worst = 0.0;
  for (int y = 8; y < 40; ++y) {
    for (int x = 8; x < 40; ++x) {
      const std::size_t i = s.flow.index(x, y);
      float v[3];
      ASSERT_TRUE(sample_bilinear(s.target, x + s.flow.du(i), y + s.flow.dv(i), v));
      worst = std::max(worst, double(std::abs(v[0] - s.reference.at(x, y, 0))));
    }
  }
  EXPECT_LT(worst, 0.03);
  for (std::size_t i = 0; i < s.flow.size(); ++i) {
    EXPECT_NEAR(s.initial_flow.du(i), 0.5 * s.flow.du(i), 1e-12);
  }
}

TEST(Augment, NoneIsBitExact) {
  const FlowSample s = affine_sample(32, 0.02, 0.5, 0.5);
  std::mt19937_64 rng(1);
  const FlowSample out = augment(s, AugmentationConfig::none(), rng);
  EXPECT_EQ(out.reference.data(), s.reference.data());
  EXPECT_EQ(out.target.data(), s.target.data());
  EXPECT_EQ(out.flow.data, s.flow.data);
  EXPECT_EQ(out.initial_flow.data, s.initial_flow.data);
}

TEST(Augment, RotationIsEquivariant) {
  const int size = 64;
  const FlowSample s = affine_sample(size, 0.01, 1.0, -1.5);
  AffineMotion m;
  m.A = Eigen::Matrix2d::Identity();
  m.A << std::cos(0.01) * 1.02, -std::sin(0.01), std::sin(0.01), std::cos(0.01) * 0.98;
  m.b = {1.0, -1.5};
  m.center = {(size - 1) / 2.0, (size - 1) / 2.0};
  for (double deg : {17.0, -17.0}) {
    const double theta = deg * M_PI / 180.0;
    for (double scale : {1.0, 1.5}) {
      const FlowSample r = rotate_scale_sample(s, theta, scale);
      const FlowField expected = m.conjugate(rotation(theta, scale)).flow(size, size);
      int checked = 0;
      for (int y = 12; y < size - 12; ++y) {
        for (int x = 12; x < size - 12; ++x) {
          const std::size_t i = r.flow.index(x, y);
          if (!r.flow.valid[i]) continue;
          EXPECT_NEAR(r.flow.du(i), expected.du(i), 1e-4);
          EXPECT_NEAR(r.flow.dv(i), expected.dv(i), 1e-4);
          ++checked;
        }
      }
      EXPECT_GT(checked, 1000) << deg << " " << scale;
    }
  }
}

TEST(Augment, ChromaticLeavesFlowUntouched) {
  const FlowSample s = affine_sample(32, 0.0, 1.0, 0.0);
  AugmentationConfig cfg = AugmentationConfig::none();
  cfg.chromatic = true;
  cfg.noise = true;
  std::mt19937_64 rng(4);
  const FlowSample out = augment(s, cfg, rng);
  EXPECT_EQ(out.flow.data, s.flow.data);
  EXPECT_NE(out.reference.data(), s.reference.data());
  for (float v : out.reference.pixels()) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
}

TEST(ToyDataset, DeterministicAndSized) {
  ToyDatasetConfig cfg;
  cfg.samples = 3;
  cfg.width = 24;
  cfg.height = 20;
  const auto a = make_toy_dataset(cfg);
  const auto b = make_toy_dataset(cfg);
  ASSERT_EQ(a.size(), 3u);
  for (int k = 0; k < 3; ++k) {
    EXPECT_EQ(a[k].reference.width(), 24);
    EXPECT_EQ(a[k].reference.height(), 20);
    EXPECT_EQ(a[k].reference.data(), b[k].reference.data());
    EXPECT_EQ(a[k].flow.data, b[k].flow.data);
  }
}

TEST(ResidualTarget, IsGroundTruthMinusInitial) {
  const FlowSample s = affine_sample(16, 0.0, 2.0, 1.0);
  const FlowField r = residual_target(s);
  for (std::size_t i = 0; i < r.size(); ++i) {
    EXPECT_NEAR(r.du(i), s.flow.du(i) - s.initial_flow.du(i), 1e-12);
  }
  EXPECT_EQ(sample_input(s).channels, 8);
}

TEST(TrainToy, ShortRunReducesError) {
  ToyDatasetConfig dc;
  dc.samples = 16;
  dc.width = 24;
  dc.height = 24;
  const auto data = make_toy_dataset(dc);
  NetworkSpec spec;
  spec.layers = {{"conv1", 8, 8, 3, true}, {"out", 8, 2, 3, false}};
  ConvNet<float> net(spec);
  net.init_he(2, 0.1);
  TrainingConfig tc;
  tc.iterations = 60;
  tc.learning_rate = 3e-3;
  tc.eval_samples = 16;
  tc.augmentation = AugmentationConfig::none();
  const TrainingReport rep = train_toy(net, data, tc);
  ASSERT_EQ(rep.loss.size(), 60u);
  EXPECT_TRUE(rep.finite);
  EXPECT_LT(rep.final_epe, rep.initial_epe);
  EXPECT_NEAR(rep.final_epe, residual_epe(net, std::span(data).first(16)), 1e-9);
}

TEST(TrainingConfig, Validation) {
  TrainingConfig tc;
  tc.batch = 0;
  EXPECT_THROW(tc.validate(), Error);
}
