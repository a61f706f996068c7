#include "fiadla/fxp.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <fmt/ranges.h>
#include <numeric>

namespace fiadla {

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::runtime_error(fmt::format("{}", fmt::join(problems, "; "))),
      problems_(std::move(problems)) {}

namespace {

std::size_t product(const std::vector<int>& dims) {
  std::size_t n = 1;
  for (int d : dims) n *= static_cast<std::size_t>(d);
  return n;
}

}  // namespace

FxpTensor::FxpTensor(std::vector<int> d, std::vector<std::int8_t> v, int frac)
    : dims(std::move(d)), data(std::move(v)), frac_bits(frac) {
  if (frac_bits < 0 || frac_bits > kMaxFracBits) {
    throw ShapeError(fmt::format("frac_bits {} outside [0, {}]", frac_bits, kMaxFracBits));
  }
  if (std::any_of(dims.begin(), dims.end(), [](int x) { return x < 1; })) {
    throw ShapeError(fmt::format("tensor dims [{}] must be positive", fmt::join(dims, ", ")));
  }
  if (product(dims) != data.size()) {
    throw ShapeError(fmt::format("tensor dims [{}] hold {} elements, data has {}",
                                 fmt::join(dims, ", "), product(dims), data.size()));
  }
}

FxpTensor FxpTensor::zeros(std::vector<int> dims, int frac_bits) {
  std::vector<std::int8_t> data(product(dims), 0);
  return FxpTensor(std::move(dims), std::move(data), frac_bits);
}

double FxpTensor::real(std::size_t i) const {
  return std::ldexp(static_cast<double>(data[i]), -frac_bits);
}

std::vector<double> FxpTensor::dequantize() const {
  std::vector<double> out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) out[i] = real(i);
  return out;
}

std::string to_string(LayerKind kind) {
  return kind == LayerKind::kConv ? "conv" : "fc";
}

std::string to_string(Activation act) {
  switch (act) {
    case Activation::kNone: return "none";
    case Activation::kHardTanh: return "hard_tanh";
    case Activation::kRelu: return "relu";
  }
  return "none";
}

LayerKind layer_kind_from_string(const std::string& s) {
  if (s == "conv") return LayerKind::kConv;
  if (s == "fc") return LayerKind::kFullyConnected;
  throw ShapeError("unknown layer kind '" + s + "'");
}

Activation activation_from_string(const std::string& s) {
  if (s == "none") return Activation::kNone;
  if (s == "hard_tanh") return Activation::kHardTanh;
  if (s == "relu") return Activation::kRelu;
  throw ShapeError("unknown activation '" + s + "'");
}

void validate(const LayerSpec& layer) {
  if (layer.kernel < 1 || layer.stride < 1 || layer.in_channels < 1 || layer.out_channels < 1) {
    throw ShapeError(fmt::format("layer needs k, stride, c, o >= 1 (got k={} stride={} c={} o={})",
                                 layer.kernel, layer.stride, layer.in_channels,
                                 layer.out_channels));
  }
  if (layer.padding < 0 || layer.requant_shift < 0 || layer.requant_shift > 31) {
    throw ShapeError("layer padding must be >= 0 and requant_shift in [0, 31]");
  }
  if (layer.kind == LayerKind::kFullyConnected &&
      (layer.kernel != 1 || layer.stride != 1 || layer.padding != 0)) {
    throw ShapeError("fully-connected layers take k = 1, stride = 1, padding = 0");
  }
}

std::vector<int> output_dims(const LayerSpec& layer, const std::vector<int>& in) {
  validate(layer);
  if (layer.kind == LayerKind::kFullyConnected) {
    if (static_cast<int>(product(in)) != layer.in_channels) {
      throw ShapeError(fmt::format("fc layer expects {} inputs, got [{}]", layer.in_channels,
                                   fmt::join(in, ", ")));
    }
    return {1, 1, layer.out_channels};
  }
  if (in.size() != 3 || in[2] != layer.in_channels) {
    throw ShapeError(fmt::format("conv layer expects HxWx{} input, got [{}]", layer.in_channels,
                                 fmt::join(in, ", ")));
  }
  const int h = (in[0] + 2 * layer.padding - layer.kernel) / layer.stride + 1;
  const int w = (in[1] + 2 * layer.padding - layer.kernel) / layer.stride + 1;
  if (in[0] + 2 * layer.padding < layer.kernel || in[1] + 2 * layer.padding < layer.kernel) {
    throw ShapeError("conv kernel larger than padded input");
  }
  return {h, w, layer.out_channels};
}

std::vector<int> weight_dims(const LayerSpec& layer) {
  if (layer.kind == LayerKind::kFullyConnected) return {layer.in_channels, layer.out_channels};
  return {layer.kernel, layer.kernel, layer.in_channels, layer.out_channels};
}

void Network::validate() const {
  if (layers.size() != weights.size()) {
    throw ShapeError(fmt::format("network '{}' has {} layers but {} weight tensors", name,
                                 layers.size(), weights.size()));
  }
  if (!biases.empty() && biases.size() != layers.size()) {
    throw ShapeError("bias list must be empty or have one entry per layer");
  }
  if (layers.empty()) throw ShapeError("network has no layers");
  std::vector<int> dims = input_dims;
  int frac = input_frac_bits;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    dims = fiadla::output_dims(layers[i], dims);
    if (weights[i].dims != weight_dims(layers[i])) {
      throw ShapeError(fmt::format("layer {} weight dims [{}] do not match [{}]", i,
                                   fmt::join(weights[i].dims, ", "),
                                   fmt::join(weight_dims(layers[i]), ", ")));
    }
    if (!biases.empty() && !biases[i].empty() &&
        static_cast<int>(biases[i].size()) != layers[i].out_channels) {
      throw ShapeError(fmt::format("layer {} bias has {} entries, expected {}", i,
                                   biases[i].size(), layers[i].out_channels));
    }
    frac = frac + weights[i].frac_bits - layers[i].requant_shift;
    if (frac < 0 || frac > kMaxFracBits) {
      throw ShapeError(fmt::format("layer {} output frac_bits {} outside [0, 7]", i, frac));
    }
  }
}

std::span<const std::int32_t> Network::bias(std::size_t layer) const {
  if (biases.empty()) return {};
  return biases[layer];
}

std::vector<int> Network::output_dims() const {
  std::vector<int> dims = input_dims;
  for (const auto& l : layers) dims = fiadla::output_dims(l, dims);
  return dims;
}

std::int8_t saturate_int8(std::int64_t v) {
  return static_cast<std::int8_t>(std::clamp<std::int64_t>(v, -128, 127));
}

std::int64_t round_shift(std::int64_t v, int shift) {
  if (shift <= 0) return v;
  const std::int64_t half = std::int64_t{1} << (shift - 1);
  if (v >= 0) return (v + half) >> shift;
  return -((-v + half) >> shift);
}

std::int8_t requantize(std::int32_t acc, int shift) {
  return saturate_int8(round_shift(acc, shift));
}

std::int8_t hard_tanh(std::int32_t acc, int shift, int out_frac_bits) {
  const int one = 1 << out_frac_bits;
  const int hi = std::min(one, 127);
  const int lo = std::max(-one, -128);
  return static_cast<std::int8_t>(std::clamp<int>(requantize(acc, shift), lo, hi));
}

std::int8_t finish_output(std::int32_t acc, const LayerSpec& layer, int out_frac_bits) {
  switch (layer.activation) {
    case Activation::kHardTanh: return hard_tanh(acc, layer.requant_shift, out_frac_bits);
    case Activation::kRelu:
      return std::max<std::int8_t>(0, requantize(acc, layer.requant_shift));
    case Activation::kNone: break;
  }
  return requantize(acc, layer.requant_shift);
}

int output_frac_bits(const LayerSpec& layer, const FxpTensor& input, const FxpTensor& weights) {
  const int frac = input.frac_bits + weights.frac_bits - layer.requant_shift;
  if (frac < 0 || frac > kMaxFracBits) {
    throw ShapeError(fmt::format("output frac_bits {} outside [0, 7]", frac));
  }
  return frac;
}

FxpTensor quantize(std::span<const double> values, int frac_bits) {
  return quantize(values, frac_bits, {static_cast<int>(values.size())});
}

FxpTensor quantize(std::span<const double> values, int frac_bits, std::vector<int> dims) {
  std::vector<std::int8_t> data(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    // std::round rounds half away from zero.
    const double scaled = std::round(std::ldexp(values[i], frac_bits));
    data[i] = static_cast<std::int8_t>(std::clamp(scaled, -128.0, 127.0));
  }
  return FxpTensor(std::move(dims), std::move(data), frac_bits);
}

namespace {

void check_weights(const LayerSpec& layer, const FxpTensor& weights,
                   std::span<const std::int32_t> bias) {
  if (weights.dims != weight_dims(layer)) {
    throw ShapeError(fmt::format("weight dims [{}] do not match layer [{}]",
                                 fmt::join(weights.dims, ", "),
                                 fmt::join(weight_dims(layer), ", ")));
  }
  if (!bias.empty() && static_cast<int>(bias.size()) != layer.out_channels) {
    throw ShapeError("bias length does not match out_channels");
  }
}

}  // namespace

FxpTensor conv2d_ref(const FxpTensor& input, const LayerSpec& layer, const FxpTensor& weights,
                     std::span<const std::int32_t> bias) {
  if (layer.kind != LayerKind::kConv) throw ShapeError("conv2d_ref needs a conv layer");
  const auto out_dims = output_dims(layer, input.dims);
  check_weights(layer, weights, bias);
  const int out_frac = output_frac_bits(layer, input, weights);

  const int in_h = input.dims[0], in_w = input.dims[1], c_in = input.dims[2];
  const int k = layer.kernel, o_n = layer.out_channels;
  FxpTensor out = FxpTensor::zeros(out_dims, out_frac);
  for (int oh = 0; oh < out_dims[0]; ++oh) {
    for (int ow = 0; ow < out_dims[1]; ++ow) {
      for (int o = 0; o < o_n; ++o) {
        std::int32_t acc = bias.empty() ? 0 : bias[o];
        for (int kh = 0; kh < k; ++kh) {
          const int ih = oh * layer.stride - layer.padding + kh;
          if (ih < 0 || ih >= in_h) continue;
          for (int kw = 0; kw < k; ++kw) {
            const int iw = ow * layer.stride - layer.padding + kw;
            if (iw < 0 || iw >= in_w) continue;
            for (int c = 0; c < c_in; ++c) {
              const auto a = input.data[(static_cast<std::size_t>(ih) * in_w + iw) * c_in + c];
              const auto b = weights.data[((static_cast<std::size_t>(kh) * k + kw) * c_in + c) * o_n + o];
              acc = wrap_add(acc, multiply(a, b));
            }
          }
        }
        out.data[(static_cast<std::size_t>(oh) * out_dims[1] + ow) * o_n + o] =
            finish_output(acc, layer, out_frac);
      }
    }
  }
  return out;
}

FxpTensor fc_ref(const FxpTensor& input, const LayerSpec& layer, const FxpTensor& weights,
                 std::span<const std::int32_t> bias) {
  if (layer.kind != LayerKind::kFullyConnected) throw ShapeError("fc_ref needs an fc layer");
  const auto out_dims = output_dims(layer, input.dims);
  check_weights(layer, weights, bias);
  const int out_frac = output_frac_bits(layer, input, weights);

  const int n_in = layer.in_channels, n_out = layer.out_channels;
  FxpTensor out = FxpTensor::zeros(out_dims, out_frac);
  for (int o = 0; o < n_out; ++o) {
    std::int32_t acc = bias.empty() ? 0 : bias[o];
    for (int i = 0; i < n_in; ++i) {
      acc = wrap_add(acc, multiply(input.data[i], weights.data[static_cast<std::size_t>(i) * n_out + o]));
    }
    out.data[o] = finish_output(acc, layer, out_frac);
  }
  return out;
}

FxpTensor apply_layer(const FxpTensor& input, const LayerSpec& layer, const FxpTensor& weights,
                      std::span<const std::int32_t> bias) {
  if (layer.kind == LayerKind::kConv) return conv2d_ref(input, layer, weights, bias);
  return fc_ref(input, layer, weights, bias);
}

FxpTensor forward(const Network& net, const FxpTensor& input, const ActivationTap& tap) {
  if (input.dims != net.input_dims && !(net.layers.front().kind == LayerKind::kFullyConnected &&
                                        product(input.dims) == product(net.input_dims))) {
    throw ShapeError(fmt::format("network '{}' expects input [{}], got [{}]", net.name,
                                 fmt::join(net.input_dims, ", "), fmt::join(input.dims, ", ")));
  }
  FxpTensor x = input;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    x = apply_layer(x, net.layers[i], net.weights[i], net.bias(i));
    if (tap && i + 1 < net.layers.size()) tap(i, x);
  }
  return x;
}

}  // namespace fiadla
