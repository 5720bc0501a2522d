#pragma once

#include <cstddef>
#include <map>
#include <span>

#include "udfc/network.hpp"
#include "udfc/tensor.hpp"

namespace udfc {

/// Feature maps of one conv block: Z (conv output, before BN) and
/// X = activation(BN(Z)).
struct BlockMaps {
  Tensor pre_bn;
  Tensor post_act;
};

struct ForwardResult {
  Tensor output;                             // logits, or the last feature map without a head
  std::map<std::size_t, BlockMaps> taps;     // keyed by conv block index
};

/// Reference inference. `input` is NCHW with CHW equal to net.input_shape.
/// Captures maps for exactly the requested conv block indices.
ForwardResult forward(const Network& net, const Tensor& input, std::span<const std::size_t> taps = {});

// Individual operators, all on NCHW batches.
Tensor conv2d(const Tensor& input, const Conv2d& conv);
Tensor batch_norm(const Tensor& input, const BatchNorm& bn);
Tensor apply_activation(const Tensor& input, Activation act);
Tensor max_pool2x2(const Tensor& input);
Tensor global_avg_pool(const Tensor& input);  // -> [N, C]
Tensor linear(const Tensor& input, const Linear& fc);

}  // namespace udfc
