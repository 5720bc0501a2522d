#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "udfc/network.hpp"

namespace udfc {

/// Bytes of `count` parameters stored at `bits` each.
double weight_bytes(std::uint64_t count, int bits);
/// Size unit of the size columns in reports: 2^20 bytes.
double to_mebibytes(double bytes);

/// Model size with per-layer weight bit-widths, one entry per weighted layer
/// (conv blocks, then the head) in network order. Conv/linear weights cost
/// wbits each; biases and the four BN arrays stay at 32 bits.
double model_size_bytes(const Network& net, std::span<const int> wbits);
double model_size_bytes(const Network& net, int wbits);
/// Uses the bit-widths recorded on the layers.
double model_size_bytes(const Network& net);

/// Size of the weighted layer at `layers[position]` (0 for pooling).
double layer_size_bytes(const Layer& layer, int wbits);

/// Multiply-accumulate count per entry of `net.layers` (pooling counts 0).
std::vector<std::uint64_t> layer_macs(const Network& net);
/// Total MACs: sum of N_out * N_in * K^2 * H_out * W_out per conv, out * in per linear.
std::uint64_t flops(const Network& net);

}  // namespace udfc
