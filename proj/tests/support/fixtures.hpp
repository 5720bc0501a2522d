#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include "udfc/network.hpp"

namespace fixture {

inline udfc::Tensor random_tensor(const udfc::Shape& shape, std::mt19937_64& rng, float stddev = 1.0f) {
  udfc::Tensor t(shape);
  std::normal_distribution<float> n(0.0f, stddev);
  for (float& v : t.data()) v = n(rng);
  return t;
}

inline udfc::BatchNorm random_bn(std::size_t channels, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> g(0.5f, 1.5f), b(-0.5f, 0.5f), m(-1.0f, 1.0f), v(0.25f, 4.0f);
  udfc::BatchNorm bn;
  for (std::size_t c = 0; c < channels; ++c) {
    bn.gamma.push_back(g(rng));
    bn.beta.push_back(b(rng));
    bn.mean.push_back(m(rng));
    bn.var.push_back(v(rng));
  }
  bn.eps = 1e-5;
  return bn;
}

inline udfc::ConvBlock random_block(std::size_t out, std::size_t in, std::size_t k, std::mt19937_64& rng,
                                    bool with_bn = true) {
  udfc::ConvBlock b;
  b.conv.weight = random_tensor({out, in, k, k}, rng, 0.5f);
  b.conv.pad = k / 2;
  if (with_bn) b.bn = random_bn(out, rng);
  return b;
}

/// conv(in -> mid) -> conv(mid -> out), both 3x3 pad 1 with BN + ReLU.
inline udfc::Network two_block_net(std::size_t in, std::size_t mid, std::size_t out, std::size_t hw,
                                   std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  udfc::Network net;
  net.input_shape = {in, hw, hw};
  net.layers.emplace_back(random_block(mid, in, 3, rng));
  net.layers.emplace_back(random_block(out, mid, 3, rng));
  return net;
}

/// Scratch directory under the system temp dir, emptied on construction.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("udfc-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace fixture
