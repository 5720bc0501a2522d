#include "udfc/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "udfc/error.hpp"
#include "udfc/model_io.hpp"

namespace udfc {

namespace {

void check_bits(int bits) {
  if (bits < kMinQuantBits || bits > kMaxQuantBits)
    throw Error(ErrorKind::InvalidArgument, "quantization bit-width must be in [2, 8], got " + std::to_string(bits));
}

double levels(int bits) { return std::ldexp(1.0, bits) - 1.0; }

float max_abs(std::span<const float> w) {
  float m = 0.0f;
  for (float v : w) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace

double dequantize_code(std::uint32_t code, int bits, double scale) {
  return (2.0 * code / levels(bits) - 1.0) * scale;
}

QuantizedChannel quantize_channel(std::span<const float> weights, int bits) {
  return quantize_channel(weights, bits, max_abs(weights));
}

QuantizedChannel quantize_channel(std::span<const float> weights, int bits, float scale) {
  check_bits(bits);
  if (!std::isfinite(scale) || scale < 0.0f)
    throw Error(ErrorKind::InvalidArgument, "quantization scale must be finite and >= 0");
  QuantizedChannel q;
  q.bits = bits;
  q.scale = scale;
  q.codes.resize(weights.size());
  q.dequant.resize(weights.size());
  const double l = levels(bits);
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (!std::isfinite(weights[i])) throw Error(ErrorKind::NonFinite, "quantize_channel input");
    const double normalized = scale > 0.0f ? double(weights[i]) / (2.0 * scale) + 0.5 : 0.5;
    // std::round rounds halfway cases away from zero.
    const double code = std::clamp(std::round(l * normalized), 0.0, l);
    q.codes[i] = static_cast<std::uint32_t>(code);
    q.dequant[i] = static_cast<float>(dequantize_code(q.codes[i], bits, scale));
  }
  return q;
}

QuantizedLayer quantize_layer(const Tensor& weights, int bits, Granularity granularity) {
  check_bits(bits);
  QuantizedLayer out;
  out.dequant = weights;
  const float tensor_scale = max_abs(weights.data());
  for (std::size_t o = 0; o < weights.dim(0); ++o) {
    const auto src = weights.slice0(o);
    QuantizedChannel q = granularity == Granularity::PerChannel ? quantize_channel(src, bits)
                                                                : quantize_channel(src, bits, tensor_scale);
    std::copy(q.dequant.begin(), q.dequant.end(), out.dequant.slice0(o).begin());
    out.channels.push_back(std::move(q));
  }
  return out;
}

void write_codes_file(const std::filesystem::path& path, const Network& net) {
  std::string bytes;
  auto emit = [&](const Tensor& w, int bits) {
    if (bits >= 32) return;
    for (const auto& ch : quantize_layer(w, bits).channels)
      for (std::uint32_t c : ch.codes) bytes.push_back(static_cast<char>(c));
  };
  for (const Layer& layer : net.layers) {
    if (const auto* b = std::get_if<ConvBlock>(&layer)) emit(b->conv.weight, b->wbits);
    else if (const auto* fc = std::get_if<Linear>(&layer)) emit(fc->weight, fc->wbits);
  }
  write_text_file(path, bytes);
}

}  // namespace udfc
