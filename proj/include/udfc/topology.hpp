#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "udfc/network.hpp"

namespace udfc {

/// One token of the topology mini-language, tokens joined by '-':
///   cN[kK][sS]  conv block with N outputs (default k=3, s=1, pad=k/2), BN and ReLU
///   mp          2x2 max pool
///   gap         global average pool
///   fcN         linear head with N outputs
struct TopologyItem {
  enum class Kind { Conv, MaxPool, GlobalAvgPool, Linear };
  Kind kind = Kind::Conv;
  std::size_t width = 0;
  std::size_t kernel = 3;
  std::size_t stride = 1;
};

std::vector<TopologyItem> parse_topology(const std::string& spec);

/// Random-weight network for `spec` (He-normal conv weights, BN statistics drawn
/// uniformly from gamma [0.5,1.5], beta [-0.5,0.5], mean [-1,1], var [0.25,4]).
/// Fully determined by `seed`.
Network random_network(const std::string& spec, const Shape& input_shape, std::uint64_t seed);

}  // namespace udfc
