#include "udfc/accounting.hpp"

#include <numeric>
#include <string>

#include "udfc/error.hpp"

namespace udfc {

double weight_bytes(std::uint64_t count, int bits) {
  return static_cast<double>(count) * static_cast<double>(bits) / 8.0;
}

double to_mebibytes(double bytes) { return bytes / (1024.0 * 1024.0); }

double layer_size_bytes(const Layer& layer, int wbits) {
  if (wbits < 2 || wbits > 32) throw Error(ErrorKind::InvalidArgument, "wbits must be in [2, 32]");
  if (const auto* b = std::get_if<ConvBlock>(&layer)) {
    double bytes = weight_bytes(b->conv.weight.size(), wbits) + weight_bytes(b->conv.bias.size(), 32);
    if (b->bn) bytes += weight_bytes(4 * b->bn->channels(), 32);
    return bytes;
  }
  if (const auto* fc = std::get_if<Linear>(&layer))
    return weight_bytes(fc->weight.size(), wbits) + weight_bytes(fc->bias.size(), 32);
  return 0.0;
}

double model_size_bytes(const Network& net, std::span<const int> wbits) {
  double total = 0.0;
  std::size_t next = 0;
  for (const Layer& layer : net.layers) {
    if (std::holds_alternative<MaxPool2x2>(layer) || std::holds_alternative<GlobalAvgPool>(layer)) continue;
    if (next >= wbits.size())
      throw Error(ErrorKind::InvalidArgument, "need one bit-width per weighted layer, got " +
                                                  std::to_string(wbits.size()));
    total += layer_size_bytes(layer, wbits[next++]);
  }
  if (next != wbits.size())
    throw Error(ErrorKind::InvalidArgument, "network has " + std::to_string(next) + " weighted layers, got " +
                                                std::to_string(wbits.size()) + " bit-widths");
  return total;
}

double model_size_bytes(const Network& net, int wbits) {
  double total = 0.0;
  for (const Layer& layer : net.layers) total += layer_size_bytes(layer, wbits);
  return total;
}

double model_size_bytes(const Network& net) {
  double total = 0.0;
  for (const Layer& layer : net.layers) {
    if (const auto* b = std::get_if<ConvBlock>(&layer)) total += layer_size_bytes(layer, b->wbits);
    else if (const auto* fc = std::get_if<Linear>(&layer)) total += layer_size_bytes(layer, fc->wbits);
  }
  return total;
}

std::vector<std::uint64_t> layer_macs(const Network& net) {
  const auto shapes = infer_shapes(net);
  std::vector<std::uint64_t> macs(net.layers.size(), 0);
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    if (const auto* b = std::get_if<ConvBlock>(&net.layers[i])) {
      const std::uint64_t k = b->conv.kernel();
      macs[i] = std::uint64_t{b->conv.out_channels()} * b->conv.in_channels() * k * k * shapes[i][1] * shapes[i][2];
    } else if (const auto* fc = std::get_if<Linear>(&net.layers[i])) {
      macs[i] = std::uint64_t{fc->out_features()} * fc->in_features();
    }
  }
  return macs;
}

std::uint64_t flops(const Network& net) {
  if (net.layers.empty()) return 0;
  const auto macs = layer_macs(net);
  return std::accumulate(macs.begin(), macs.end(), std::uint64_t{0});
}

}  // namespace udfc
