#include "udfc/network.hpp"

#include <cmath>
#include <string>

#include "udfc/error.hpp"

namespace udfc {

float BatchNorm::sigma(std::size_t c) const {
  return static_cast<float>(std::sqrt(static_cast<double>(var[c]) + eps));
}

BatchNorm BatchNorm::identity(std::size_t channels, double eps) {
  BatchNorm bn;
  bn.gamma.assign(channels, 1.0f);
  bn.beta.assign(channels, 0.0f);
  bn.mean.assign(channels, 0.0f);
  bn.var.assign(channels, 1.0f);
  bn.eps = eps;
  return bn;
}

void BatchNorm::erase_channel(std::size_t c) {
  gamma.erase(gamma.begin() + static_cast<std::ptrdiff_t>(c));
  beta.erase(beta.begin() + static_cast<std::ptrdiff_t>(c));
  mean.erase(mean.begin() + static_cast<std::ptrdiff_t>(c));
  var.erase(var.begin() + static_cast<std::ptrdiff_t>(c));
}

std::vector<std::size_t> Network::conv_positions() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < layers.size(); ++i)
    if (std::holds_alternative<ConvBlock>(layers[i])) out.push_back(i);
  return out;
}

std::size_t Network::conv_count() const { return conv_positions().size(); }

ConvBlock& Network::block(std::size_t index) {
  const auto pos = conv_positions();
  if (index >= pos.size())
    throw Error(ErrorKind::IndexOutOfRange, "conv block " + std::to_string(index));
  return std::get<ConvBlock>(layers[pos[index]]);
}

const ConvBlock& Network::block(std::size_t index) const {
  return const_cast<Network*>(this)->block(index);
}

Linear* Network::head() {
  if (layers.empty()) return nullptr;
  return std::get_if<Linear>(&layers.back());
}

const Linear* Network::head() const { return const_cast<Network*>(this)->head(); }

namespace {

std::string at_layer(std::size_t i) { return "layer " + std::to_string(i) + ": "; }

bool finite_all(const std::vector<float>& v) {
  for (float x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace

std::vector<Shape> infer_shapes(const Network& net) {
  if (net.input_shape.size() != 3 || shape_numel(net.input_shape) == 0)
    throw Error(ErrorKind::ShapeMismatch, "input_shape must be CHW with positive extents, got " +
                                              shape_to_string(net.input_shape));
  std::vector<Shape> shapes;
  Shape cur = net.input_shape;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const Layer& layer = net.layers[i];
    if (const auto* b = std::get_if<ConvBlock>(&layer)) {
      const Conv2d& conv = b->conv;
      if (cur.size() != 3)
        throw Error(ErrorKind::UnsupportedLayer, at_layer(i) + "convolution after flattening");
      if (conv.weight.rank() != 4 || conv.weight.dim(2) != conv.weight.dim(3))
        throw Error(ErrorKind::ShapeMismatch, at_layer(i) + "conv weight must be OIHW with square kernel");
      if (conv.in_channels() != cur[0])
        throw Error(ErrorKind::ShapeMismatch, at_layer(i) + "conv expects " +
                                                  std::to_string(conv.in_channels()) + " input channels, got " +
                                                  std::to_string(cur[0]));
      if (conv.stride < 1) throw Error(ErrorKind::Validation, at_layer(i) + "stride must be >= 1");
      const std::size_t k = conv.kernel();
      if (cur[1] + 2 * conv.pad < k || cur[2] + 2 * conv.pad < k)
        throw Error(ErrorKind::ShapeMismatch, at_layer(i) + "kernel larger than padded input");
      cur = {conv.out_channels(), (cur[1] + 2 * conv.pad - k) / conv.stride + 1,
             (cur[2] + 2 * conv.pad - k) / conv.stride + 1};
    } else if (std::holds_alternative<MaxPool2x2>(layer)) {
      if (cur.size() != 3 || cur[1] < 2 || cur[2] < 2)
        throw Error(ErrorKind::ShapeMismatch, at_layer(i) + "max pool needs a feature map of at least 2x2");
      cur = {cur[0], cur[1] / 2, cur[2] / 2};
    } else if (std::holds_alternative<GlobalAvgPool>(layer)) {
      if (cur.size() != 3) throw Error(ErrorKind::UnsupportedLayer, at_layer(i) + "repeated global pooling");
      cur = {cur[0]};
    } else {
      const auto& fc = std::get<Linear>(layer);
      if (cur.size() != 1)
        throw Error(ErrorKind::UnsupportedLayer, at_layer(i) + "linear head must follow GlobalAvgPool");
      if (fc.weight.rank() != 2 || fc.in_features() != cur[0])
        throw Error(ErrorKind::ShapeMismatch, at_layer(i) + "linear expects " +
                                                  std::to_string(fc.weight.rank() == 2 ? fc.in_features() : 0) +
                                                  " features, got " + std::to_string(cur[0]));
      cur = {fc.out_features()};
    }
    shapes.push_back(cur);
  }
  return shapes;
}

void validate(const Network& net) {
  if (net.conv_count() == 0) throw Error(ErrorKind::Validation, "network has no conv blocks");
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const Layer& layer = net.layers[i];
    if (const auto* fc = std::get_if<Linear>(&layer)) {
      if (i + 1 != net.layers.size())
        throw Error(ErrorKind::UnsupportedLayer, at_layer(i) + "linear layer must be the last layer");
      if (i == 0 || !std::holds_alternative<GlobalAvgPool>(net.layers[i - 1]))
        throw Error(ErrorKind::UnsupportedLayer, at_layer(i) + "linear head must directly follow GlobalAvgPool");
      if (fc->weight.rank() == 2 && !fc->bias.empty() && fc->bias.size() != fc->out_features())
        throw Error(ErrorKind::ShapeMismatch, at_layer(i) + "linear bias length");
      if (!fc->weight.all_finite() || !finite_all(fc->bias))
        throw Error(ErrorKind::NonFinite, at_layer(i) + "linear parameters");
      if (fc->wbits < 2 || fc->wbits > 32) throw Error(ErrorKind::Validation, at_layer(i) + "wbits out of [2,32]");
    } else if (const auto* b = std::get_if<ConvBlock>(&layer)) {
      const Conv2d& conv = b->conv;
      if (conv.weight.rank() != 4) throw Error(ErrorKind::ShapeMismatch, at_layer(i) + "conv weight must be OIHW");
      if (!conv.bias.empty() && conv.bias.size() != conv.out_channels())
        throw Error(ErrorKind::ShapeMismatch, at_layer(i) + "conv bias length");
      if (!conv.weight.all_finite() || !finite_all(conv.bias))
        throw Error(ErrorKind::NonFinite, at_layer(i) + "conv parameters");
      if (b->wbits < 2 || b->wbits > 32) throw Error(ErrorKind::Validation, at_layer(i) + "wbits out of [2,32]");
      if (b->bn) {
        const BatchNorm& bn = *b->bn;
        const std::size_t n = conv.out_channels();
        if (bn.gamma.size() != n || bn.beta.size() != n || bn.mean.size() != n || bn.var.size() != n)
          throw Error(ErrorKind::ShapeMismatch, at_layer(i) + "batch norm declares " +
                                                    std::to_string(bn.gamma.size()) + " channels, conv has " +
                                                    std::to_string(n));
        if (!finite_all(bn.gamma) || !finite_all(bn.beta) || !finite_all(bn.mean) || !finite_all(bn.var) ||
            !std::isfinite(bn.eps))
          throw Error(ErrorKind::NonFinite, at_layer(i) + "batch norm parameters");
        if (bn.eps < 0.0) throw Error(ErrorKind::Validation, at_layer(i) + "batch norm eps must be >= 0");
        for (std::size_t c = 0; c < n; ++c) {
          if (bn.var[c] < 0.0f) throw Error(ErrorKind::Validation, at_layer(i) + "negative running variance");
          if (!(bn.sigma(c) > 0.0f)) throw Error(ErrorKind::Validation, at_layer(i) + "batch norm sigma is zero");
        }
      }
    }
  }
  infer_shapes(net);
}

}  // namespace udfc
