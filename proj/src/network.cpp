#include "burstdepth/network.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "burstdepth/error.hpp"

namespace burstdepth {

NetworkSpec NetworkSpec::residual_flow() {
  NetworkSpec s;
  s.layers = {{"conv1", 8, 32, 7, true},
              {"conv2", 32, 64, 7, true},
              {"deconv2", 64, 32, 7, true},
              {"deconv1", 32, 16, 7, true},
              {"deconv0", 16, 2, 7, false}};
  return s;
}

std::size_t NetworkSpec::parameter_count() const {
  std::size_t n = 0;
  for (const LayerSpec& l : layers) n += l.parameter_count();
  return n;
}

void NetworkSpec::validate() const {
  if (layers.empty()) throw Error(ErrorCode::kConfiguration, "network has no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    if (l.in_channels <= 0 || l.out_channels <= 0 || l.kernel <= 0 || l.kernel % 2 == 0) {
      throw Error(ErrorCode::kConfiguration, "layer " + l.name + " has an invalid shape");
    }
    if (i > 0 && layers[i - 1].out_channels != l.in_channels) {
      throw Error(ErrorCode::kConfiguration, "layer " + l.name + " does not chain");
    }
  }
}

namespace {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using StridedRows = Eigen::Map<RowMatrix<Scalar>, 0, Eigen::OuterStride<>>;

// im2col working set is capped at this many elements per chunk of rows.
constexpr std::size_t kColumnBudget = std::size_t(1) << 23;

int rows_per_chunk(int kk_in, int width, int height) {
  const std::size_t per_row = std::size_t(kk_in) * width;
  return static_cast<int>(std::clamp<std::size_t>(kColumnBudget / std::max<std::size_t>(per_row, 1), 1,
                                                  static_cast<std::size_t>(height)));
}

// col(r, p) for r = (c, ky, kx) and p = pixel in rows [y0, y1).
// The matrix lives in `buffer`, which only ever grows, so repeated calls do
// not go back to the allocator.
template <typename Scalar>
using ColumnMap = Eigen::Map<RowMatrix<Scalar>>;

template <typename Scalar>
ColumnMap<Scalar> scratch_matrix(std::vector<Scalar>& buffer, Eigen::Index rows, Eigen::Index cols) {
  const std::size_t size = std::size_t(rows) * std::size_t(cols);
  if (buffer.size() < size) buffer.resize(size);
  return ColumnMap<Scalar>(buffer.data(), rows, cols);
}

template <typename Scalar>
ColumnMap<Scalar> im2col(const FeatureMap<Scalar>& in, int k, int y0, int y1, std::vector<Scalar>& buffer) {
  const int w = in.width;
  const int h = in.height;
  const int pad = k / 2;
  const int rows = y1 - y0;
  ColumnMap<Scalar> col = scratch_matrix(buffer, in.channels * k * k, Eigen::Index(rows) * w);
  col.setZero();
  for (int c = 0; c < in.channels; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        Scalar* dst = col.row((c * k + ky) * k + kx).data();
        const int dx = kx - pad;
        const int x_begin = std::max(0, -dx);
        const int x_end = std::min(w, w - dx);
        if (x_begin >= x_end) continue;
        for (int y = y0; y < y1; ++y) {
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= h) continue;
          const Scalar* src = &in.data[c * in.plane() + std::size_t(sy) * w];
          std::memcpy(dst + std::size_t(y - y0) * w + x_begin, src + x_begin + dx,
                      sizeof(Scalar) * (x_end - x_begin));
        }
      }
    }
  }
  return col;
}

template <typename Scalar>
void col2im_add(const ColumnMap<Scalar>& col, int k, int y0, int y1, FeatureMap<Scalar>& out) {
  const int w = out.width;
  const int h = out.height;
  const int pad = k / 2;
  for (int c = 0; c < out.channels; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const Scalar* src = col.row((c * k + ky) * k + kx).data();
        const int dx = kx - pad;
        const int x_begin = std::max(0, -dx);
        const int x_end = std::min(w, w - dx);
        for (int y = y0; y < y1; ++y) {
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= h) continue;
          Scalar* dst = &out.data[c * out.plane() + std::size_t(sy) * w];
          const Scalar* s = src + std::size_t(y - y0) * w;
          for (int x = x_begin; x < x_end; ++x) dst[x + dx] += s[x];
        }
      }
    }
  }
}

}  // namespace

template <typename Scalar>
ConvNet<Scalar>::ConvNet(NetworkSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  std::size_t offset = 0;
  for (const LayerSpec& l : spec_.layers) {
    offsets_.push_back(offset);
    offset += l.parameter_count();
  }
  params_.assign(offset, Scalar(0));
}

template <typename Scalar>
void ConvNet<Scalar>::init_he(std::uint64_t seed, double last_gain) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t l = 0; l < spec_.layers.size(); ++l) {
    const LayerSpec& layer = spec_.layers[l];
    const std::size_t fan_in = std::size_t(layer.kernel) * layer.kernel * layer.in_channels;
    double scale = std::sqrt(2.0 / static_cast<double>(fan_in));
    if (l + 1 == spec_.layers.size()) scale *= last_gain;
    Scalar* p = &params_[offsets_[l]];
    for (std::size_t i = 0; i < fan_in * layer.out_channels; ++i) {
      p[i] = static_cast<Scalar>(scale * normal(rng));
    }
    std::fill(p + fan_in * layer.out_channels, p + layer.parameter_count(), Scalar(0));
  }
}

template <typename Scalar>
FeatureMap<Scalar> ConvNet<Scalar>::forward(const FeatureMap<Scalar>& input, Trace* trace) const {
  if (input.channels != spec_.input_channels()) {
    throw Error(ErrorCode::kShapeMismatch, "network input has " + std::to_string(input.channels) +
                                               " channels, expected " +
                                               std::to_string(spec_.input_channels()));
  }
  if (trace) {
    trace->activations.clear();
    trace->activations.push_back(input);
  }
  FeatureMap<Scalar> current = input;
  thread_local std::vector<Scalar> col_buffer;
  for (std::size_t l = 0; l < spec_.layers.size(); ++l) {
    const LayerSpec& layer = spec_.layers[l];
    const int k = layer.kernel;
    const int kk_in = k * k * layer.in_channels;
    const Scalar* wp = &params_[offsets_[l]];
    Eigen::Map<const RowMatrix<Scalar>> weights(wp, layer.out_channels, kk_in);
    Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> bias(
        wp + std::size_t(kk_in) * layer.out_channels, layer.out_channels);

    FeatureMap<Scalar> next(layer.out_channels, current.height, current.width);
    const int chunk = rows_per_chunk(kk_in, current.width, current.height);
    for (int y0 = 0; y0 < current.height; y0 += chunk) {
      const int y1 = std::min(current.height, y0 + chunk);
      const ColumnMap<Scalar> col = im2col(current, k, y0, y1, col_buffer);
      const Eigen::Index pixels = Eigen::Index(y1 - y0) * current.width;
      StridedRows<Scalar> out(&next.data[std::size_t(y0) * current.width], layer.out_channels,
                              pixels, Eigen::OuterStride<>(next.plane()));
      out.noalias() = weights * col;
      out.colwise() += bias;
      if (layer.relu) out = out.cwiseMax(Scalar(0));
    }
    current = std::move(next);
    if (trace) trace->activations.push_back(current);
  }
  return current;
}

template <typename Scalar>
void ConvNet<Scalar>::backward(const Trace& trace, const FeatureMap<Scalar>& grad_output,
                               std::vector<Scalar>& grad) const {
  if (trace.activations.size() != spec_.layers.size() + 1) {
    throw Error(ErrorCode::kConfiguration, "backward needs the trace of a forward pass");
  }
  if (grad.empty()) grad.assign(params_.size(), Scalar(0));
  if (grad.size() != params_.size()) throw Error(ErrorCode::kShapeMismatch, "gradient buffer size");

  FeatureMap<Scalar> delta = grad_output;
  thread_local std::vector<Scalar> col_buffer;
  thread_local std::vector<Scalar> dcol_buffer;
  for (std::size_t l = spec_.layers.size(); l-- > 0;) {
    const LayerSpec& layer = spec_.layers[l];
    const FeatureMap<Scalar>& in = trace.activations[l];
    const FeatureMap<Scalar>& out = trace.activations[l + 1];
    if (layer.relu) {
      for (std::size_t i = 0; i < delta.data.size(); ++i) {
        if (!(out.data[i] > Scalar(0))) delta.data[i] = Scalar(0);
      }
    }
    const int k = layer.kernel;
    const int kk_in = k * k * layer.in_channels;
    const Scalar* wp = &params_[offsets_[l]];
    Eigen::Map<const RowMatrix<Scalar>> weights(wp, layer.out_channels, kk_in);
    Eigen::Map<RowMatrix<Scalar>> gw(&grad[offsets_[l]], layer.out_channels, kk_in);
    Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> gb(
        &grad[offsets_[l] + std::size_t(kk_in) * layer.out_channels], layer.out_channels);

    FeatureMap<Scalar> previous;
    if (l > 0) {
      previous = FeatureMap<Scalar>(in.channels, in.height, in.width);
    }
    const int chunk = rows_per_chunk(kk_in, in.width, in.height);
    for (int y0 = 0; y0 < in.height; y0 += chunk) {
      const int y1 = std::min(in.height, y0 + chunk);
      const ColumnMap<Scalar> col = im2col(in, k, y0, y1, col_buffer);
      const Eigen::Index pixels = Eigen::Index(y1 - y0) * in.width;
      StridedRows<Scalar> d(&delta.data[std::size_t(y0) * in.width], layer.out_channels, pixels,
                            Eigen::OuterStride<>(delta.plane()));
      gw.noalias() += d * col.transpose();
      gb += d.rowwise().sum();
      if (l > 0) {
        ColumnMap<Scalar> dcol = scratch_matrix(dcol_buffer, kk_in, pixels);
        dcol.noalias() = weights.transpose() * d;
        col2im_add(dcol, k, y0, y1, previous);
      }
    }
    delta = std::move(previous);
  }
}

namespace {

constexpr char kMagic[8] = {'B', 'D', 'N', 'E', 'T', '0', '0', '1'};

template <typename T>
void write_pod(std::ostream& os, T value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T value{};
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!is) throw Error(ErrorCode::kIo, "truncated weight file");
  return value;
}

}  // namespace

template <typename Scalar>
void ConvNet<Scalar>::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  os.write(kMagic, sizeof(kMagic));
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(spec_.layers.size()));
  for (std::size_t l = 0; l < spec_.layers.size(); ++l) {
    const LayerSpec& layer = spec_.layers[l];
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(layer.name.size()));
    os.write(layer.name.data(), static_cast<std::streamsize>(layer.name.size()));
    write_pod<std::int32_t>(os, layer.out_channels);
    write_pod<std::int32_t>(os, layer.in_channels);
    write_pod<std::int32_t>(os, layer.kernel);
    write_pod<std::uint8_t>(os, layer.relu ? 1 : 0);
    for (std::size_t i = 0; i < layer.parameter_count(); ++i) {
      write_pod<float>(os, static_cast<float>(params_[offsets_[l] + i]));
    }
  }
  if (!os) throw Error(ErrorCode::kIo, "failed writing " + path.string());
}

template <typename Scalar>
ConvNet<Scalar> ConvNet<Scalar>::load(const std::filesystem::path& path, const NetworkSpec& spec) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::kIo, "cannot read " + path.string());
  char magic[sizeof(kMagic)];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorCode::kIo, path.string() + " is not a weight file");
  }
  ConvNet net(spec);
  const auto count = read_pod<std::uint32_t>(is);
  if (count != spec.layers.size()) {
    throw Error(ErrorCode::kShapeMismatch, "weight file has " + std::to_string(count) +
                                               " layers, expected " +
                                               std::to_string(spec.layers.size()));
  }
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    const LayerSpec& layer = spec.layers[l];
    const auto name_length = read_pod<std::uint32_t>(is);
    if (name_length > 256) throw Error(ErrorCode::kIo, "corrupt layer name");
    std::string name(name_length, '\0');
    is.read(name.data(), name_length);
    const auto out = read_pod<std::int32_t>(is);
    const auto in = read_pod<std::int32_t>(is);
    const auto kernel = read_pod<std::int32_t>(is);
    const auto relu = read_pod<std::uint8_t>(is);
    if (name != layer.name || out != layer.out_channels || in != layer.in_channels ||
        kernel != layer.kernel || (relu != 0) != layer.relu) {
      throw Error(ErrorCode::kShapeMismatch,
                  "layer '" + name + "' " + std::to_string(in) + "->" + std::to_string(out) + " k" +
                      std::to_string(kernel) + " does not match '" + layer.name + "'");
    }
    for (std::size_t i = 0; i < layer.parameter_count(); ++i) {
      net.params_[net.offsets_[l] + i] = static_cast<Scalar>(read_pod<float>(is));
    }
  }
  return net;
}

template class ConvNet<float>;
template class ConvNet<double>;

FeatureMap<float> make_network_input(const Image& reference, const Image& warped,
                                     const FlowField& initial_flow) {
  const int w = reference.width();
  const int h = reference.height();
  if (!warped.same_size(w, h) || initial_flow.width != w || initial_flow.height != h) {
    throw Error(ErrorCode::kShapeMismatch, "network input stack dimensions differ");
  }
  FeatureMap<float> stack(8, h, w);
  const std::size_t plane = stack.plane();
  auto put_image = [&](const Image& img, int first) {
    const int nc = img.channels();
    if (nc != 1 && nc != 3) throw Error(ErrorCode::kShapeMismatch, "images must have 1 or 3 channels");
    for (int c = 0; c < 3; ++c) {
      float* dst = &stack.data[(first + c) * plane];
      const int src_c = nc == 3 ? c : 0;
      for (std::size_t i = 0; i < plane; ++i) {
        dst[i] = (img.data()[i * nc + src_c] - kImageMean[c]) / kImageStd[c];
      }
    }
  };
  put_image(reference, 0);
  put_image(warped, 3);
  for (std::size_t i = 0; i < plane; ++i) {
    const bool ok = initial_flow.valid[i];
    stack.data[6 * plane + i] = ok ? static_cast<float>(initial_flow.du(i) / kFlowScale) : 0.0f;
    stack.data[7 * plane + i] = ok ? static_cast<float>(initial_flow.dv(i) / kFlowScale) : 0.0f;
  }
  return stack;
}

Image denormalize_image(const FeatureMap<float>& input, int first_channel) {
  if (first_channel < 0 || first_channel + 3 > input.channels) {
    throw Error(ErrorCode::kShapeMismatch, "no 3-channel image block at that offset");
  }
  Image out(input.width, input.height, 3);
  const std::size_t plane = input.plane();
  for (int c = 0; c < 3; ++c) {
    const float* src = &input.data[(first_channel + c) * plane];
    for (std::size_t i = 0; i < plane; ++i) out.data()[i * 3 + c] = src[i] * kImageStd[c] + kImageMean[c];
  }
  return out;
}

FlowField network_output_to_flow(const FeatureMap<float>& output) {
  if (output.channels != 2) throw Error(ErrorCode::kShapeMismatch, "flow output must have 2 channels");
  FlowField flow(output.width, output.height);
  const std::size_t plane = output.plane();
  for (std::size_t i = 0; i < plane; ++i) {
    flow.set(i, kFlowScale * output.data[i], kFlowScale * output.data[plane + i]);
  }
  return flow;
}

double epe_loss(const FlowField& predicted, const FlowField& target) {
  if (predicted.width != target.width || predicted.height != target.height) {
    throw Error(ErrorCode::kShapeMismatch, "EPE needs flows of equal size");
  }
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (!predicted.valid[i] || !target.valid[i]) continue;
    sum += std::hypot(predicted.du(i) - target.du(i), predicted.dv(i) - target.dv(i));
    ++count;
  }
  if (count == 0) throw Error(ErrorCode::kNoValidPixels, "EPE over an empty valid set");
  return sum / static_cast<double>(count);
}

template <typename Scalar>
double epe_loss_with_gradient(const FeatureMap<Scalar>& output, const FlowField& target,
                              FeatureMap<Scalar>* grad) {
  if (output.channels != 2 || output.width != target.width || output.height != target.height) {
    throw Error(ErrorCode::kShapeMismatch, "EPE output/target shapes differ");
  }
  const std::size_t plane = output.plane();
  std::size_t count = 0;
  for (std::size_t i = 0; i < plane; ++i) count += target.valid[i] ? 1 : 0;
  if (count == 0) throw Error(ErrorCode::kNoValidPixels, "EPE over an empty valid set");
  if (grad) *grad = FeatureMap<Scalar>(2, output.height, output.width);
  double sum = 0.0;
  const double inv = 1.0 / static_cast<double>(count);
  for (std::size_t i = 0; i < plane; ++i) {
    if (!target.valid[i]) continue;
    const double du = kFlowScale * static_cast<double>(output.data[i]) - target.du(i);
    const double dv = kFlowScale * static_cast<double>(output.data[plane + i]) - target.dv(i);
    const double norm = std::hypot(du, dv);
    sum += norm;
    if (grad && norm > 0.0) {
      grad->data[i] = static_cast<Scalar>(kFlowScale * inv * du / norm);
      grad->data[plane + i] = static_cast<Scalar>(kFlowScale * inv * dv / norm);
    }
  }
  return sum * inv;
}

template double epe_loss_with_gradient(const FeatureMap<float>&, const FlowField&, FeatureMap<float>*);
template double epe_loss_with_gradient(const FeatureMap<double>&, const FlowField&, FeatureMap<double>*);

}  // namespace burstdepth
