#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "burstdepth/error.hpp"
#include "burstdepth/network.hpp"
#include "oracles.hpp"

using namespace burstdepth;

namespace {

NetworkSpec tiny_spec() {
  NetworkSpec s;
  s.layers = {{"a", 3, 4, 3, true}, {"b", 4, 2, 3, false}};
  return s;
}

template <typename Scalar>
FeatureMap<Scalar> random_map(int c, int h, int w, unsigned seed) {
  FeatureMap<Scalar> m(c, h, w);
  std::mt19937 rng(seed);
  std::normal_distribution<double> n(0, 1);
  for (auto& v : m.data) v = static_cast<Scalar>(n(rng));
  return m;
}

}  // namespace

TEST(NetworkSpec, ParameterCountIsExact) {
  const NetworkSpec s = NetworkSpec::residual_flow();
  // Independent count from the layer table.
  const int chans[6] = {8, 32, 64, 32, 16, 2};
  std::size_t expected = 0;
  for (int l = 0; l < 5; ++l) expected += std::size_t(7 * 7 * chans[l]) * chans[l + 1] + chans[l + 1];
  EXPECT_EQ(expected, 240050u);
  EXPECT_EQ(s.parameter_count(), expected);
  EXPECT_EQ(ConvNet<float>().parameter_count(), expected);
  EXPECT_EQ(s.input_channels(), 8);
  EXPECT_EQ(s.output_channels(), 2);
}

TEST(NetworkSpec, RejectsChannelMismatch) {
  NetworkSpec s;
  s.layers = {{"a", 3, 4, 3, true}, {"b", 5, 2, 3, false}};
  EXPECT_THROW(s.validate(), Error);
}

TEST(ConvNet, ZeroWeightsGiveZeroOutputOfInputSize) {
  const ConvNet<float> net;
  const FeatureMap<float> out = net.forward(random_map<float>(8, 48, 64, 1));
  EXPECT_EQ(out.channels, 2);
  EXPECT_EQ(out.height, 48);
  EXPECT_EQ(out.width, 64);
  for (float v : out.data) EXPECT_EQ(v, 0.0f);
}

TEST(ConvNet, WrongInputChannelsThrow) {
  const ConvNet<float> net;
  EXPECT_THROW(net.forward(random_map<float>(3, 8, 8, 1)), Error);
}

TEST(ConvNet, MatchesDirectConvolution) {
  ConvNet<double> net(NetworkSpec::residual_flow());
  net.init_he(4);
  std::mt19937 rng(5);
  std::normal_distribution<double> n(0, 0.1);
  const auto& spec = net.spec();
  // Non-zero biases so their placement is checked too.
  std::size_t offset = 0;
  for (const auto& L : spec.layers) {
    offset += std::size_t(L.kernel) * L.kernel * L.in_channels * L.out_channels;
    for (int o = 0; o < L.out_channels; ++o) net.parameters()[offset + o] = n(rng);
    offset += L.out_channels;
  }
  const auto input = random_map<double>(8, 9, 11, 6);
  const auto out = net.forward(input);
  const auto expected = oracle::naive_network(spec, net.parameters(), input.data, 9, 11);
  ASSERT_EQ(out.data.size(), expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_NEAR(out.data[i], expected[i], 1e-9 * (1 + std::abs(expected[i])));
}

TEST(ConvNet, FloatAndDoubleAgree) {
  ConvNet<double> d;
  d.init_he(9);
  const ConvNet<float> f = d.cast<float>();
  const auto in_d = random_map<double>(8, 12, 10, 2);
  FeatureMap<float> in_f(8, 12, 10);
  for (std::size_t i = 0; i < in_d.data.size(); ++i) in_f.data[i] = static_cast<float>(in_d.data[i]);
  const auto od = d.forward(in_d);
  const auto of = f.forward(in_f);
  for (std::size_t i = 0; i < od.data.size(); ++i) EXPECT_NEAR(of.data[i], od.data[i], 1e-3 * (1 + std::abs(od.data[i])));
}

TEST(ConvNet, GradientMatchesFiniteDifferences) {
  ConvNet<double> net(tiny_spec());
  net.init_he(3);
  for (auto& p : net.parameters()) p += 0.05;  // move biases off zero, avoid ReLU kinks at 0
  const auto input = random_map<double>(3, 6, 5, 7);
  const auto weight = random_map<double>(2, 6, 5, 8);
  auto loss = [&](const std::vector<double>& params) {
    ConvNet<double> copy(tiny_spec());
    copy.parameters() = params;
    const auto out = copy.forward(input);
    double s = 0;
    for (std::size_t i = 0; i < out.data.size(); ++i) s += out.data[i] * weight.data[i];
    return s;
  };
  ConvNet<double>::Trace trace;
  net.forward(input, &trace);
  std::vector<double> grad;
  net.backward(trace, weight, grad);
  ASSERT_EQ(grad.size(), net.parameter_count());
  for (std::size_t k = 0; k < grad.size(); ++k) {
    std::vector<double> p = net.parameters();
    const double h = 1e-6;
    p[k] += h;
    const double fp = loss(p);
    p[k] -= 2 * h;
    const double fm = loss(p);
    const double fd = (fp - fm) / (2 * h);
    EXPECT_NEAR(grad[k], fd, 1e-5 * (1 + std::abs(fd))) << k;
  }
}

TEST(ConvNet, BackwardAccumulates) {
  ConvNet<double> net(tiny_spec());
  net.init_he(1);
  const auto input = random_map<double>(3, 5, 5, 1);
  const auto g = random_map<double>(2, 5, 5, 2);
  ConvNet<double>::Trace trace;
  net.forward(input, &trace);
  std::vector<double> once, twice;
  net.backward(trace, g, once);
  net.backward(trace, g, twice);
  net.backward(trace, g, twice);
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_NEAR(twice[i], 2 * once[i], 1e-12 * (1 + std::abs(once[i])));
}

TEST(ConvNet, SaveLoadRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "burstdepth_net_test";
  std::filesystem::create_directories(dir);
  ConvNet<float> net;
  net.init_he(12);
  net.save(dir / "w.bin");
  const ConvNet<float> back = ConvNet<float>::load(dir / "w.bin");
  EXPECT_EQ(back.parameters(), net.parameters());
  EXPECT_THROW(ConvNet<float>::load(dir / "w.bin", tiny_spec()), Error);
  EXPECT_THROW(ConvNet<float>::load(dir / "missing.bin"), Error);
  std::filesystem::remove_all(dir);
}

TEST(NetworkInput, NormalizationAndFlowScale) {
  Image ref(4, 3, 3, 0.485f);
  Image warped(4, 3, 3, 0.0f);
  FlowField flow = FlowField::constant(4, 3, 2.0, -5.0);
  flow.invalidate(7);
  const FeatureMap<float> in = make_network_input(ref, warped, flow);
  ASSERT_EQ(in.channels, 8);
  EXPECT_NEAR(in.at(0, 1, 1), 0.0f, 1e-6);
  EXPECT_NEAR(in.at(3, 0, 0), -0.485f / 0.229f, 1e-5);
  EXPECT_NEAR(in.at(6, 0, 0), 0.2f, 1e-7);
  EXPECT_NEAR(in.at(7, 0, 0), -0.5f, 1e-7);
  EXPECT_EQ(in.at(6, 1, 3), 0.0f);
  const Image back = denormalize_image(in, 0);
  EXPECT_NEAR(back.at(2, 2, 0), 0.485f, 1e-6);
}

TEST(NetworkOutput, ScalesToPixels) {
  FeatureMap<float> out(2, 1, 2);
  out.data = {0.1f, -0.2f, 0.3f, 0.0f};
  const FlowField f = network_output_to_flow(out);
  EXPECT_NEAR(f.du(0), 1.0, 1e-6);
  EXPECT_NEAR(f.du(1), -2.0, 1e-6);
  EXPECT_NEAR(f.dv(0), 3.0, 1e-6);
}

TEST(Epe, HandCases) {
  const FlowField zero(2, 2);
  EXPECT_DOUBLE_EQ(epe_loss(zero, zero), 0.0);
  EXPECT_DOUBLE_EQ(epe_loss(FlowField::constant(2, 2, 3, 4), zero), 5.0);
  FlowField half = FlowField::constant(2, 1, 3, 4);
  half.set(1, 0, 0);
  EXPECT_DOUBLE_EQ(epe_loss(half, FlowField(2, 1)), 2.5);
  FlowField masked(2, 1);
  masked.invalidate(0);
  EXPECT_DOUBLE_EQ(epe_loss(half, masked), 0.0);
  masked.invalidate(1);
  EXPECT_THROW(epe_loss(half, masked), Error);
}

TEST(Epe, GradientMatchesFiniteDifferences) {
  auto out = random_map<double>(2, 3, 4, 11);
  FlowField target(4, 3);
  std::mt19937 rng(3);
  std::normal_distribution<double> n(0, 1);
  for (std::size_t i = 0; i < target.size(); ++i) target.set(i, n(rng), n(rng));
  target.invalidate(5);
  FeatureMap<double> grad;
  epe_loss_with_gradient(out, target, &grad);
  for (std::size_t k = 0; k < out.data.size(); ++k) {
    auto p = out;
    p.data[k] += 1e-7;
    const double fp = epe_loss_with_gradient<double>(p, target, nullptr);
    p.data[k] -= 2e-7;
    const double fm = epe_loss_with_gradient<double>(p, target, nullptr);
    EXPECT_NEAR(grad.data[k], (fp - fm) / 2e-7, 1e-6) << k;
  }
}
