#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "udfc/network.hpp"
#include "udfc/tensor.hpp"

namespace udfc {

inline constexpr int kMinQuantBits = 2;
inline constexpr int kMaxQuantBits = 8;

/// Symmetric uniform k-bit quantization of one channel.
///
/// code    = round((2^k - 1) * (w / (2 * scale) + 1/2)), ties away from zero
/// dequant = (2 * code / (2^k - 1) - 1) * scale,  scale = max|w|
struct QuantizedChannel {
  std::vector<std::uint32_t> codes;
  int bits = 8;
  float scale = 0.0f;
  std::vector<float> dequant;
};

enum class Granularity { PerChannel, PerTensor };

struct QuantizedLayer {
  std::vector<QuantizedChannel> channels;
  Tensor dequant;  // same shape as the source weights
};

/// Dequantized value of `code` in double precision, before rounding to float.
double dequantize_code(std::uint32_t code, int bits, double scale);

QuantizedChannel quantize_channel(std::span<const float> weights, int bits);
/// Same grid with an externally supplied scale (used for per-tensor scaling).
QuantizedChannel quantize_channel(std::span<const float> weights, int bits, float scale);

/// Quantizes every output channel (axis 0) of `weights`.
QuantizedLayer quantize_layer(const Tensor& weights, int bits, Granularity granularity = Granularity::PerChannel);

/// Re-derives the codes of every layer with wbits < 32 and writes them to
/// `path`, one byte per code, layers in network order, channels in axis-0
/// order. Exact for compressed networks because the quantizer is idempotent.
void write_codes_file(const std::filesystem::path& path, const Network& net);

}  // namespace udfc
