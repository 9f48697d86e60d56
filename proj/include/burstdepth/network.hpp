#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "burstdepth/geometry.hpp"
#include "burstdepth/image.hpp"

namespace burstdepth {

/// Channel-major (C, H, W) tensor.
template <typename Scalar>
struct FeatureMap {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<Scalar> data;

  FeatureMap() = default;
  FeatureMap(int c, int h, int w) : channels(c), height(h), width(w), data(std::size_t(c) * h * w) {}

  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  Scalar& at(int c, int y, int x) { return data[c * plane() + std::size_t(y) * width + x]; }
  Scalar at(int c, int y, int x) const { return data[c * plane() + std::size_t(y) * width + x]; }
};

struct LayerSpec {
  std::string name;
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 7;
  bool relu = true;

  std::size_t parameter_count() const {
    return std::size_t(kernel) * kernel * in_channels * out_channels + out_channels;
  }
};

struct NetworkSpec {
  std::vector<LayerSpec> layers;

  /// conv1 8->32, conv2 32->64, deconv2 64->32, deconv1 32->16, deconv0 16->2,
  /// all 7x7 stride 1; ReLU everywhere but the last layer.
  static NetworkSpec residual_flow();
  std::size_t parameter_count() const;
  int input_channels() const { return layers.empty() ? 0 : layers.front().in_channels; }
  int output_channels() const { return layers.empty() ? 0 : layers.back().out_channels; }
  void validate() const;
};

/// Plain stride-1, same-padded convolution stack. Every layer (including the
/// "deconvolutions", which are spatially identical at stride 1) stores its
/// weights as [out][in][k][k] followed by [out] biases in one flat buffer.
template <typename Scalar>
class ConvNet {
 public:
  /// Activations kept by forward() for a later backward().
  struct Trace {
    std::vector<FeatureMap<Scalar>> activations;  // input, then each layer's output
  };

  explicit ConvNet(NetworkSpec spec = NetworkSpec::residual_flow());  // zero weights

  /// He-normal weights, zero biases. The last layer is scaled by `last_gain`.
  void init_he(std::uint64_t seed, double last_gain = 1.0);

  const NetworkSpec& spec() const { return spec_; }
  std::size_t parameter_count() const { return params_.size(); }
  std::vector<Scalar>& parameters() { return params_; }
  const std::vector<Scalar>& parameters() const { return params_; }

  FeatureMap<Scalar> forward(const FeatureMap<Scalar>& input, Trace* trace = nullptr) const;

  /// Accumulates dLoss/dparams into `grad` (resized if empty) given
  /// dLoss/doutput and the trace of the matching forward pass.
  void backward(const Trace& trace, const FeatureMap<Scalar>& grad_output,
                std::vector<Scalar>& grad) const;

  /// Self-describing little-endian container: magic, layer count, then per
  /// layer name, shape and float32 tensors.
  void save(const std::filesystem::path& path) const;
  /// Throws kShapeMismatch when the file's layers differ from `spec`.
  static ConvNet load(const std::filesystem::path& path,
                      const NetworkSpec& spec = NetworkSpec::residual_flow());

  template <typename Other>
  ConvNet<Other> cast() const {
    ConvNet<Other> out(spec_);
    for (std::size_t i = 0; i < params_.size(); ++i) out.parameters()[i] = static_cast<Other>(params_[i]);
    return out;
  }

 private:
  std::size_t weight_offset(std::size_t layer) const { return offsets_[layer]; }

  NetworkSpec spec_;
  std::vector<std::size_t> offsets_;
  std::vector<Scalar> params_;
};

extern template class ConvNet<float>;
extern template class ConvNet<double>;

/// Flow channels are divided by this before entering the network and the
/// output is multiplied by it.
inline constexpr double kFlowScale = 10.0;
inline constexpr float kImageMean[3] = {0.485f, 0.456f, 0.406f};
inline constexpr float kImageStd[3] = {0.229f, 0.224f, 0.225f};

/// 8-channel normalized stack: reference RGB, warped RGB, initial flow.
/// Masked flow pixels enter as zero.
FeatureMap<float> make_network_input(const Image& reference, const Image& warped,
                                     const FlowField& initial_flow);
/// Inverse of the image normalization for one 3-channel block.
Image denormalize_image(const FeatureMap<float>& input, int first_channel);
FlowField network_output_to_flow(const FeatureMap<float>& output);

/// Mean endpoint error over pixels valid in both fields. Throws kNoValidPixels
/// when none are.
double epe_loss(const FlowField& predicted, const FlowField& target);

/// EPE between a 2-channel network output (scaled by kFlowScale) and a target
/// flow, with its gradient w.r.t. the raw output. Pixels with `target` masked
/// are ignored; returns the mean and writes `grad` (same shape as output).
template <typename Scalar>
double epe_loss_with_gradient(const FeatureMap<Scalar>& output, const FlowField& target,
                              FeatureMap<Scalar>* grad);

}  // namespace burstdepth
