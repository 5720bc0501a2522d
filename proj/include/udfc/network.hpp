#pragma once

#include <cstddef>
#include <optional>
#include <variant>
#include <vector>

#include "udfc/tensor.hpp"

namespace udfc {

enum class Activation { Identity, ReLU };

/// Inference-mode batch normalization using running statistics.
/// Effective sigma is sqrt(var + eps).
struct BatchNorm {
  std::vector<float> gamma;
  std::vector<float> beta;
  std::vector<float> mean;
  std::vector<float> var;
  double eps = 1e-5;

  std::size_t channels() const noexcept { return gamma.size(); }
  float sigma(std::size_t c) const;
  /// Per-channel multiplier gamma / sigma.
  float scale(std::size_t c) const { return gamma[c] / sigma(c); }
  /// Per-channel offset beta - gamma * mean / sigma.
  float shift(std::size_t c) const { return beta[c] - gamma[c] * mean[c] / sigma(c); }

  static BatchNorm identity(std::size_t channels, double eps = 0.0);
  void erase_channel(std::size_t c);

  friend bool operator==(const BatchNorm&, const BatchNorm&) = default;
};

struct Conv2d {
  Tensor weight;  // OIHW
  std::size_t stride = 1;
  std::size_t pad = 0;
  std::vector<float> bias;  // empty when the convolution has no bias

  std::size_t out_channels() const { return weight.dim(0); }
  std::size_t in_channels() const { return weight.dim(1); }
  std::size_t kernel() const { return weight.dim(2); }

  friend bool operator==(const Conv2d&, const Conv2d&) = default;
};

struct ConvBlock {
  Conv2d conv;
  std::optional<BatchNorm> bn;
  Activation activation = Activation::ReLU;
  int wbits = 32;

  friend bool operator==(const ConvBlock&, const ConvBlock&) = default;
};

/// 2x2 window, stride 2, floor semantics.
struct MaxPool2x2 {
  friend bool operator==(const MaxPool2x2&, const MaxPool2x2&) = default;
};

struct GlobalAvgPool {
  friend bool operator==(const GlobalAvgPool&, const GlobalAvgPool&) = default;
};

struct Linear {
  Tensor weight;  // out_features x in_features
  std::vector<float> bias;
  int wbits = 32;

  std::size_t out_features() const { return weight.dim(0); }
  std::size_t in_features() const { return weight.dim(1); }

  friend bool operator==(const Linear&, const Linear&) = default;
};

using Layer = std::variant<ConvBlock, MaxPool2x2, GlobalAvgPool, Linear>;

/// Sequential conv-BN-activation chain with optional 2x2 max pools and a
/// GlobalAvgPool -> Linear head. Conv blocks are addressed by their ordinal
/// ("block index"), not by their position in `layers`.
struct Network {
  Shape input_shape;  // C, H, W
  std::vector<Layer> layers;

  std::vector<std::size_t> conv_positions() const;
  std::size_t conv_count() const;
  ConvBlock& block(std::size_t index);
  const ConvBlock& block(std::size_t index) const;
  Linear* head();
  const Linear* head() const;

  friend bool operator==(const Network&, const Network&) = default;
};

/// Per-sample output shape after every entry of `net.layers` (CHW for feature
/// maps, {features} after GlobalAvgPool/Linear). Throws on inconsistencies.
std::vector<Shape> infer_shapes(const Network& net);

/// Checks structural and numerical invariants; throws udfc::Error.
void validate(const Network& net);

}  // namespace udfc
