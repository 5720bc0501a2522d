#include "udfc/topology.hpp"

#include <cmath>
#include <random>
#include <regex>
#include <sstream>

#include "udfc/error.hpp"

namespace udfc {

std::vector<TopologyItem> parse_topology(const std::string& spec) {
  static const std::regex conv(R"(c(\d+)(?:k(\d+))?(?:s(\d+))?)");
  static const std::regex fc(R"(fc(\d+))");
  std::vector<TopologyItem> items;
  std::stringstream ss(spec);
  std::string token;
  while (std::getline(ss, token, '-')) {
    std::smatch m;
    TopologyItem item;
    if (token == "mp") {
      item.kind = TopologyItem::Kind::MaxPool;
    } else if (token == "gap") {
      item.kind = TopologyItem::Kind::GlobalAvgPool;
    } else if (std::regex_match(token, m, fc)) {
      item.kind = TopologyItem::Kind::Linear;
      item.width = std::stoul(m[1]);
    } else if (std::regex_match(token, m, conv)) {
      item.kind = TopologyItem::Kind::Conv;
      item.width = std::stoul(m[1]);
      if (m[2].matched) item.kernel = std::stoul(m[2]);
      if (m[3].matched) item.stride = std::stoul(m[3]);
    } else {
      throw Error(ErrorKind::InvalidArgument, "bad topology token '" + token + "' in '" + spec + "'");
    }
    if ((item.kind == TopologyItem::Kind::Conv || item.kind == TopologyItem::Kind::Linear) && item.width == 0)
      throw Error(ErrorKind::InvalidArgument, "zero width in '" + token + "'");
    if (item.kernel == 0 || item.stride == 0)
      throw Error(ErrorKind::InvalidArgument, "kernel and stride must be positive in '" + token + "'");
    items.push_back(item);
  }
  if (items.empty()) throw Error(ErrorKind::InvalidArgument, "empty topology");
  return items;
}

Network random_network(const std::string& spec, const Shape& input_shape, std::uint64_t seed) {
  const auto items = parse_topology(spec);
  std::mt19937_64 rng(seed);
  auto uniform = [&](float lo, float hi) { return std::uniform_real_distribution<float>(lo, hi)(rng); };

  Network net;
  net.input_shape = input_shape;
  if (input_shape.size() != 3) throw Error(ErrorKind::ShapeMismatch, "input shape must be CHW");
  std::size_t channels = input_shape[0];
  for (const TopologyItem& item : items) {
    switch (item.kind) {
      case TopologyItem::Kind::Conv: {
        ConvBlock b;
        const std::size_t k = item.kernel;
        b.conv.weight = Tensor({item.width, channels, k, k});
        b.conv.stride = item.stride;
        b.conv.pad = k / 2;
        std::normal_distribution<float> normal(0.0f, std::sqrt(2.0f / static_cast<float>(channels * k * k)));
        for (float& w : b.conv.weight.data()) w = normal(rng);
        BatchNorm bn;
        for (std::size_t c = 0; c < item.width; ++c) {
          bn.gamma.push_back(uniform(0.5f, 1.5f));
          bn.beta.push_back(uniform(-0.5f, 0.5f));
          bn.mean.push_back(uniform(-1.0f, 1.0f));
          bn.var.push_back(uniform(0.25f, 4.0f));
        }
        bn.eps = 1e-5;
        b.bn = std::move(bn);
        b.activation = Activation::ReLU;
        net.layers.emplace_back(std::move(b));
        channels = item.width;
        break;
      }
      case TopologyItem::Kind::MaxPool:
        net.layers.emplace_back(MaxPool2x2{});
        break;
      case TopologyItem::Kind::GlobalAvgPool:
        net.layers.emplace_back(GlobalAvgPool{});
        break;
      case TopologyItem::Kind::Linear: {
        Linear fc;
        fc.weight = Tensor({item.width, channels});
        std::normal_distribution<float> normal(0.0f, std::sqrt(1.0f / static_cast<float>(channels)));
        for (float& w : fc.weight.data()) w = normal(rng);
        fc.bias.resize(item.width);
        for (float& b : fc.bias) b = uniform(-0.1f, 0.1f);
        net.layers.emplace_back(std::move(fc));
        channels = item.width;
        break;
      }
    }
  }
  validate(net);
  return net;
}

}  // namespace udfc
