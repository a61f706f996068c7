#pragma once

// 8-bit fixed-point golden reference model. Every simulated (and faulty)
// execution path in the project is compared bit-for-bit against these ops.
//
// Conventions:
//   activations  dims {H, W, C}, index (h * W + w) * C + c
//   conv weights dims {K, K, C, O}, index ((kh * K + kw) * C + c) * O + o
//   fc weights   dims {IN, OUT},   index i * OUT + o
// Products are 16-bit, accumulation is 32-bit two's complement (wrapping).
// Quantization and requantization round half away from zero.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fiadla/error.hpp"

namespace fiadla {

inline constexpr int kMaxFracBits = 7;

struct FxpTensor {
  std::vector<int> dims;
  std::vector<std::int8_t> data;
  int frac_bits = 0;

  FxpTensor() = default;
  // Throws ShapeError if dims do not match data or frac_bits is out of [0, 7].
  FxpTensor(std::vector<int> dims, std::vector<std::int8_t> data, int frac_bits);

  static FxpTensor zeros(std::vector<int> dims, int frac_bits);

  std::size_t size() const { return data.size(); }
  double real(std::size_t i) const;
  std::vector<double> dequantize() const;

  friend bool operator==(const FxpTensor&, const FxpTensor&) = default;
};

enum class LayerKind { kConv, kFullyConnected };
enum class Activation { kNone, kHardTanh, kRelu };

struct LayerSpec {
  LayerKind kind = LayerKind::kConv;
  int kernel = 1;
  int stride = 1;
  int in_channels = 1;
  int out_channels = 1;
  int padding = 0;
  Activation activation = Activation::kNone;
  int requant_shift = 0;

  // Length of the dot product each output element needs (c * k * k).
  int reduction_length() const { return in_channels * kernel * kernel; }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

std::string to_string(LayerKind kind);
std::string to_string(Activation act);
LayerKind layer_kind_from_string(const std::string& s);
Activation activation_from_string(const std::string& s);

// Validates the LayerSpec invariants (k, stride, c, o >= 1, shift >= 0).
void validate(const LayerSpec& layer);

// Output dims of `layer` applied to an activation of `input_dims`.
std::vector<int> output_dims(const LayerSpec& layer, const std::vector<int>& input_dims);
std::vector<int> weight_dims(const LayerSpec& layer);

struct Network {
  std::string name;
  std::vector<int> input_dims;
  int input_frac_bits = 0;
  std::vector<LayerSpec> layers;
  std::vector<FxpTensor> weights;
  // One bias vector per layer, in accumulator units; empty means zero bias.
  std::vector<std::vector<std::int32_t>> biases;

  // Throws ShapeError if layers do not compose or weights mismatch.
  void validate() const;
  std::span<const std::int32_t> bias(std::size_t layer) const;
  std::vector<int> output_dims() const;

  friend bool operator==(const Network&, const Network&) = default;
};

std::int8_t saturate_int8(std::int64_t v);

// Arithmetic right shift rounding half away from zero.
std::int64_t round_shift(std::int64_t v, int shift);

inline std::int32_t wrap_add(std::int32_t a, std::int32_t b) {
  return static_cast<std::int32_t>(static_cast<std::uint32_t>(a) +
                                   static_cast<std::uint32_t>(b));
}

inline std::int16_t multiply(std::int8_t a, std::int8_t b) {
  return static_cast<std::int16_t>(static_cast<int>(a) * static_cast<int>(b));
}

std::int8_t requantize(std::int32_t acc, int shift);

// Requantize, then clamp to the encoding of [-1, 1] at `out_frac_bits`.
std::int8_t hard_tanh(std::int32_t acc, int shift, int out_frac_bits);

// Full output stage: requantize plus the layer activation.
std::int8_t finish_output(std::int32_t acc, const LayerSpec& layer, int out_frac_bits);

int output_frac_bits(const LayerSpec& layer, const FxpTensor& input, const FxpTensor& weights);

FxpTensor quantize(std::span<const double> values, int frac_bits);
FxpTensor quantize(std::span<const double> values, int frac_bits, std::vector<int> dims);

FxpTensor conv2d_ref(const FxpTensor& input, const LayerSpec& layer, const FxpTensor& weights,
                     std::span<const std::int32_t> bias = {});
FxpTensor fc_ref(const FxpTensor& input, const LayerSpec& layer, const FxpTensor& weights,
                 std::span<const std::int32_t> bias = {});
FxpTensor apply_layer(const FxpTensor& input, const LayerSpec& layer, const FxpTensor& weights,
                      std::span<const std::int32_t> bias = {});

// Observes (and may replace) the activation produced by layer `index`. Called
// for every layer output except the network output.
using ActivationTap = std::function<void(std::size_t index, FxpTensor& activation)>;

FxpTensor forward(const Network& net, const FxpTensor& input, const ActivationTap& tap = {});

}  // namespace fiadla
