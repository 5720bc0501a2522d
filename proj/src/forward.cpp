#include "udfc/forward.hpp"

#include <algorithm>
#include <string>

#include "udfc/error.hpp"
#include "udfc/parallel.hpp"

namespace udfc {

namespace {

void require_nchw(const Tensor& t, const char* op) {
  if (t.rank() != 4) throw Error(ErrorKind::ShapeMismatch, std::string(op) + " expects NCHW, got " +
                                                               shape_to_string(t.shape()));
}

}  // namespace

Tensor conv2d(const Tensor& input, const Conv2d& conv) {
  require_nchw(input, "conv2d");
  const std::size_t batch = input.dim(0), in_c = input.dim(1), in_h = input.dim(2), in_w = input.dim(3);
  if (in_c != conv.in_channels())
    throw Error(ErrorKind::ShapeMismatch, "conv2d: input has " + std::to_string(in_c) + " channels, weight expects " +
                                              std::to_string(conv.in_channels()));
  const std::size_t out_c = conv.out_channels(), k = conv.kernel(), s = conv.stride, p = conv.pad;
  if (in_h + 2 * p < k || in_w + 2 * p < k) throw Error(ErrorKind::ShapeMismatch, "conv2d: kernel exceeds input");
  const std::size_t out_h = (in_h + 2 * p - k) / s + 1, out_w = (in_w + 2 * p - k) / s + 1;
  Tensor out({batch, out_c, out_h, out_w});

  const float* w = conv.weight.data().data();
  parallel_for(batch * out_c, [&](std::size_t job) {
    const std::size_t n = job / out_c, oc = job % out_c;
    float* dst = &out.at(n, oc, 0, 0);
    const float b = conv.bias.empty() ? 0.0f : conv.bias[oc];
    std::fill(dst, dst + out_h * out_w, b);
    for (std::size_t ic = 0; ic < in_c; ++ic) {
      const float* src = &input.at(n, ic, 0, 0);
      const float* wk = w + (oc * in_c + ic) * k * k;
      for (std::size_t kh = 0; kh < k; ++kh) {
        for (std::size_t kw = 0; kw < k; ++kw) {
          const float wv = wk[kh * k + kw];
          for (std::size_t oh = 0; oh < out_h; ++oh) {
            const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * s + kh) - static_cast<std::ptrdiff_t>(p);
            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(in_h)) continue;
            const float* row = src + static_cast<std::size_t>(ih) * in_w;
            float* drow = dst + oh * out_w;
            for (std::size_t ow = 0; ow < out_w; ++ow) {
              const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * s + kw) - static_cast<std::ptrdiff_t>(p);
              if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(in_w)) continue;
              drow[ow] += wv * row[iw];
            }
          }
        }
      }
    }
  });
  return out;
}

Tensor batch_norm(const Tensor& input, const BatchNorm& bn) {
  require_nchw(input, "batch_norm");
  const std::size_t batch = input.dim(0), c = input.dim(1), plane = input.dim(2) * input.dim(3);
  if (bn.channels() != c) throw Error(ErrorKind::ShapeMismatch, "batch_norm: channel count");
  Tensor out = input;
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const float mu = bn.mean[ch], sigma = bn.sigma(ch), g = bn.gamma[ch], b = bn.beta[ch];
      float* p = &out.at(n, ch, 0, 0);
      for (std::size_t i = 0; i < plane; ++i) p[i] = (p[i] - mu) / sigma * g + b;
    }
  }
  return out;
}

Tensor apply_activation(const Tensor& input, Activation act) {
  Tensor out = input;
  if (act == Activation::ReLU)
    for (float& v : out.data()) v = std::max(v, 0.0f);
  return out;
}

Tensor max_pool2x2(const Tensor& input) {
  require_nchw(input, "max_pool2x2");
  const std::size_t batch = input.dim(0), c = input.dim(1), oh = input.dim(2) / 2, ow = input.dim(3) / 2;
  Tensor out({batch, c, oh, ow});
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x)
          out.at(n, ch, y, x) = std::max({input.at(n, ch, 2 * y, 2 * x), input.at(n, ch, 2 * y, 2 * x + 1),
                                          input.at(n, ch, 2 * y + 1, 2 * x), input.at(n, ch, 2 * y + 1, 2 * x + 1)});
  return out;
}

Tensor global_avg_pool(const Tensor& input) {
  require_nchw(input, "global_avg_pool");
  const std::size_t batch = input.dim(0), c = input.dim(1), plane = input.dim(2) * input.dim(3);
  Tensor out({batch, c});
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const float* p = &input.at(n, ch, 0, 0);
      float acc = 0.0f;
      for (std::size_t i = 0; i < plane; ++i) acc += p[i];
      out[n * c + ch] = acc / static_cast<float>(plane);
    }
  return out;
}

Tensor linear(const Tensor& input, const Linear& fc) {
  if (input.rank() != 2 || input.dim(1) != fc.in_features())
    throw Error(ErrorKind::ShapeMismatch, "linear: input " + shape_to_string(input.shape()));
  const std::size_t batch = input.dim(0), in = fc.in_features(), out_f = fc.out_features();
  Tensor out({batch, out_f});
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t o = 0; o < out_f; ++o) {
      float acc = fc.bias.empty() ? 0.0f : fc.bias[o];
      for (std::size_t i = 0; i < in; ++i) acc += fc.weight[o * in + i] * input[n * in + i];
      out[n * out_f + o] = acc;
    }
  return out;
}

ForwardResult forward(const Network& net, const Tensor& input, std::span<const std::size_t> taps) {
  if (input.rank() != 4 || input.dim(0) < 1 || input.dim(1) != net.input_shape.at(0) ||
      input.dim(2) != net.input_shape.at(1) || input.dim(3) != net.input_shape.at(2))
    throw Error(ErrorKind::ShapeMismatch, "forward: input " + shape_to_string(input.shape()) +
                                              " does not match network input " + shape_to_string(net.input_shape));
  ForwardResult result;
  Tensor x = input;
  std::size_t block_index = 0;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const Layer& layer = net.layers[i];
    if (const auto* b = std::get_if<ConvBlock>(&layer)) {
      Tensor z = conv2d(x, b->conv);
      x = apply_activation(b->bn ? batch_norm(z, *b->bn) : z, b->activation);
      if (std::find(taps.begin(), taps.end(), block_index) != taps.end())
        result.taps[block_index] = BlockMaps{std::move(z), x};
      ++block_index;
    } else if (std::holds_alternative<MaxPool2x2>(layer)) {
      x = max_pool2x2(x);
    } else if (std::holds_alternative<GlobalAvgPool>(layer)) {
      x = global_avg_pool(x);
    } else {
      x = linear(x, std::get<Linear>(layer));
    }
    if (!x.all_finite())
      throw Error(ErrorKind::NonFinite, "forward: non-finite activation after layer " + std::to_string(i));
  }
  result.output = std::move(x);
  return result;
}

}  // namespace udfc
