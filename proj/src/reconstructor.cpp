#include "udfc/reconstructor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "udfc/error.hpp"

namespace udfc {

ChannelAffine block_affine(const ConvBlock& block) {
  const std::size_t n = block.conv.out_channels();
  ChannelAffine a;
  a.scale.resize(n);
  a.shift.resize(n);
  for (std::size_t c = 0; c < n; ++c) {
    const double bias = block.conv.bias.empty() ? 0.0 : block.conv.bias[c];
    if (block.bn) {
      const BatchNorm& bn = *block.bn;
      const double sigma = bn.sigma(c);
      a.scale[c] = bn.gamma[c] / sigma;
      a.shift[c] = bn.beta[c] - bn.gamma[c] * (bn.mean[c] - bias) / sigma;
    } else {
      a.scale[c] = 1.0;
      a.shift[c] = bias;
    }
  }
  return a;
}

bool is_dead_channel(const ConvBlock& block, std::size_t channel) {
  return block.bn && std::abs(double(block.bn->gamma.at(channel))) < kDeadGamma;
}

namespace {

void check_kept(const ConvBlock& layer, std::size_t pruned, std::span<const std::size_t> kept) {
  const std::size_t n = layer.conv.out_channels();
  if (pruned >= n) throw Error(ErrorKind::IndexOutOfRange, "pruned channel " + std::to_string(pruned));
  if (kept.empty()) throw Error(ErrorKind::InvalidArgument, "kept set is empty");
  for (std::size_t i : kept) {
    if (i >= n) throw Error(ErrorKind::IndexOutOfRange, "kept channel " + std::to_string(i));
    if (i == pruned) throw Error(ErrorKind::InvalidArgument, "kept set contains the pruned channel");
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

PruningSystem build_pruning_system(const ConvBlock& layer, std::size_t pruned, std::span<const std::size_t> kept) {
  if (!layer.bn) throw Error(ErrorKind::Validation, "pruning compensation needs a batch-normalized layer");
  check_kept(layer, pruned, kept);
  if (is_dead_channel(layer, pruned))
    throw Error(ErrorKind::DeadChannel, "channel " + std::to_string(pruned) + " has |gamma| < 1e-12");

  const ChannelAffine affine = block_affine(layer);
  const Tensor& w = layer.conv.weight;
  PruningSystem s;
  s.pruned = pruned;
  s.kept.assign(kept.begin(), kept.end());
  s.dim = w.size() / w.dim(0);
  s.basis.resize(s.dim * kept.size());
  s.target.assign(w.slice0(pruned).begin(), w.slice0(pruned).end());
  s.offsets.resize(kept.size());
  s.target_offset = affine.shift[pruned];
  for (std::size_t c = 0; c < kept.size(); ++c) {
    const std::size_t i = kept[c];
    const double ratio = affine.scale[i] / affine.scale[pruned];
    const auto src = w.slice0(i);
    for (std::size_t d = 0; d < s.dim; ++d) s.basis[c * s.dim + d] = ratio * src[d];
    s.offsets[c] = affine.shift[i];
  }
  return s;
}

NormalEquations normal_equations(const PruningSystem& system, double alpha1) {
  const std::size_t n = system.columns();
  NormalEquations eq;
  eq.size = n;
  eq.matrix.resize(n * n);
  eq.rhs.resize(n);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a; b < n; ++b) {
      const double v = dot(system.column(a), system.column(b)) + alpha1 * system.offsets[a] * system.offsets[b];
      eq.matrix[a * n + b] = v;
      eq.matrix[b * n + a] = v;
    }
    eq.gram_trace += dot(system.column(a), system.column(a));
    eq.rhs[a] = dot(system.column(a), system.target) + alpha1 * system.offsets[a] * system.target_offset;
  }
  return eq;
}

double default_ridge(const NormalEquations& eq) {
  return eq.size ? 1e-8 * eq.gram_trace / static_cast<double>(eq.size) : 0.0;
}

std::vector<double> solve_pruning_scales(const NormalEquations& eq, double ridge) {
  if (!(ridge >= 0.0)) throw Error(ErrorKind::InvalidArgument, "ridge must be >= 0");
  const std::size_t n = eq.size;
  std::vector<double> l(eq.matrix);
  double max_diag = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    l[i * n + i] += ridge;
    max_diag = std::max(max_diag, std::abs(l[i * n + i]));
  }
  const double tol = 1e-13 * max_diag;
  // In-place lower Cholesky factor.
  for (std::size_t j = 0; j < n; ++j) {
    double diag = l[j * n + j];
    for (std::size_t k = 0; k < j; ++k) diag -= l[j * n + k] * l[j * n + k];
    if (!(diag > tol) || !std::isfinite(diag))
      throw Error(ErrorKind::Singular, "normal matrix is not positive definite at column " + std::to_string(j) +
                                           (ridge == 0.0 ? "; use ridge > 0" : ""));
    const double root = std::sqrt(diag);
    l[j * n + j] = root;
    for (std::size_t i = j + 1; i < n; ++i) {
      double v = l[i * n + j];
      for (std::size_t k = 0; k < j; ++k) v -= l[i * n + k] * l[j * n + k];
      l[i * n + j] = v / root;
    }
  }
  std::vector<double> x(eq.rhs);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < i; ++k) x[i] -= l[i * n + k] * x[k];
    x[i] /= l[i * n + i];
  }
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t k = i + 1; k < n; ++k) x[i] -= l[k * n + i] * x[k];
    x[i] /= l[i * n + i];
  }
  return x;
}

std::vector<double> solve_pruning_scales(const PruningSystem& system, double alpha1, double ridge) {
  if (!(alpha1 >= 0.0)) throw Error(ErrorKind::InvalidArgument, "alpha1 must be >= 0");
  return solve_pruning_scales(normal_equations(system, alpha1), ridge);
}

ChannelGram::ChannelGram(const ConvBlock& layer)
    : channels_(layer.conv.out_channels()), gram_(channels_ * channels_), affine_(block_affine(layer)) {
  const Tensor& w = layer.conv.weight;
  const std::size_t dim = w.size() / channels_;
  std::vector<double> wd(w.data().begin(), w.data().end());
  for (std::size_t a = 0; a < channels_; ++a)
    for (std::size_t b = a; b < channels_; ++b) {
      double s = 0.0;
      const double* pa = &wd[a * dim];
      const double* pb = &wd[b * dim];
      for (std::size_t d = 0; d < dim; ++d) s += pa[d] * pb[d];
      gram_[a * channels_ + b] = s;
      gram_[b * channels_ + a] = s;
    }
}

NormalEquations ChannelGram::normal_equations(std::size_t pruned, std::span<const std::size_t> kept,
                                              double alpha1) const {
  const std::size_t n = kept.size();
  const double inv = 1.0 / affine_.scale[pruned];
  NormalEquations eq;
  eq.size = n;
  eq.matrix.resize(n * n);
  eq.rhs.resize(n);
  for (std::size_t a = 0; a < n; ++a) {
    const std::size_t ia = kept[a];
    const double ra = affine_.scale[ia] * inv;
    for (std::size_t b = a; b < n; ++b) {
      const std::size_t ib = kept[b];
      const double v = ra * affine_.scale[ib] * inv * gram_[ia * channels_ + ib] +
                       alpha1 * affine_.shift[ia] * affine_.shift[ib];
      eq.matrix[a * n + b] = v;
      eq.matrix[b * n + a] = v;
    }
    eq.gram_trace += ra * ra * gram_[ia * channels_ + ia];
    eq.rhs[a] = ra * gram_[ia * channels_ + pruned] + alpha1 * affine_.shift[ia] * affine_.shift[pruned];
  }
  return eq;
}

double pruning_loss(const PruningSystem& system, std::span<const double> s_hat, double alpha1) {
  if (s_hat.size() != system.columns()) throw Error(ErrorKind::ShapeMismatch, "s_hat length");
  double weight_term = 0.0;
  for (std::size_t d = 0; d < system.dim; ++d) {
    double r = system.target[d];
    for (std::size_t c = 0; c < s_hat.size(); ++c) r -= s_hat[c] * system.basis[c * system.dim + d];
    weight_term += r * r;
  }
  const double offset_residual = system.target_offset - dot(system.offsets, s_hat);
  return weight_term + alpha1 * offset_residual * offset_residual;
}

std::vector<double> loss_gradient(const PruningSystem& system, std::span<const double> s_hat, double alpha1) {
  if (s_hat.size() != system.columns()) throw Error(ErrorKind::ShapeMismatch, "s_hat length");
  // Residual form of the same expression: -2 Q^T (V - Q s) - 2 alpha1 P (K_j - P.s).
  std::vector<double> residual(system.target);
  for (std::size_t c = 0; c < s_hat.size(); ++c)
    for (std::size_t d = 0; d < system.dim; ++d) residual[d] -= s_hat[c] * system.basis[c * system.dim + d];
  const double offset_residual = system.target_offset - dot(system.offsets, s_hat);
  std::vector<double> g(s_hat.size());
  for (std::size_t c = 0; c < s_hat.size(); ++c)
    g[c] = -2.0 * dot(system.column(c), residual) - 2.0 * alpha1 * system.offsets[c] * offset_residual;
  return g;
}

QuantSystem build_quant_system(const ConvBlock& layer, std::size_t channel, std::span<const float> dequant) {
  if (channel >= layer.conv.out_channels())
    throw Error(ErrorKind::IndexOutOfRange, "quantized channel " + std::to_string(channel));
  const auto w = layer.conv.weight.slice0(channel);
  if (dequant.size() != w.size()) throw Error(ErrorKind::ShapeMismatch, "dequantized channel length");
  const ChannelAffine affine = block_affine(layer);
  QuantSystem q;
  q.original.resize(w.size());
  q.quantized.resize(w.size());
  for (std::size_t d = 0; d < w.size(); ++d) {
    q.original[d] = affine.scale[channel] * w[d];
    q.quantized[d] = affine.scale[channel] * dequant[d];
  }
  q.offset = affine.shift[channel];
  return q;
}

QuantScale solve_quant_scale(std::span<const double> original, std::span<const double> quantized, double offset,
                             double alpha2) {
  if (!(alpha2 >= 0.0)) throw Error(ErrorKind::InvalidArgument, "alpha2 must be >= 0");
  if (original.size() != quantized.size()) throw Error(ErrorKind::ShapeMismatch, "R and R~ lengths differ");
  const double k2 = alpha2 * offset * offset;
  const double denom = dot(quantized, quantized) + k2;
  if (!(denom > std::numeric_limits<double>::min())) return QuantScale{1.0, true};
  return QuantScale{(dot(quantized, original) + k2) / denom, false};
}

QuantScale solve_quant_scale(const QuantSystem& system, double alpha2) {
  return solve_quant_scale(system.original, system.quantized, system.offset, alpha2);
}

double quant_loss(std::span<const double> original, std::span<const double> quantized, double offset,
                  double s_tilde, double alpha2) {
  double weight_term = 0.0;
  for (std::size_t d = 0; d < original.size(); ++d) {
    const double r = original[d] - s_tilde * quantized[d];
    weight_term += r * r;
  }
  const double offset_residual = offset - s_tilde * offset;
  return weight_term + alpha2 * offset_residual * offset_residual;
}

double quant_loss(const QuantSystem& system, double s_tilde, double alpha2) {
  return quant_loss(system.original, system.quantized, system.offset, s_tilde, alpha2);
}

double total_loss(const PruningSystem& pruning, std::span<const double> s_hat, double alpha1,
                  const QuantSystem& quant, double s_tilde, double alpha2) {
  return pruning_loss(pruning, s_hat, alpha1) + quant_loss(quant, s_tilde, alpha2);
}

void erase_output_channel(ConvBlock& layer, std::size_t channel) {
  Tensor& w = layer.conv.weight;
  if (channel >= w.dim(0)) throw Error(ErrorKind::IndexOutOfRange, "output channel " + std::to_string(channel));
  if (w.dim(0) == 1) throw Error(ErrorKind::InvalidArgument, "cannot remove the last remaining channel");
  std::vector<float> data(w.values());
  const std::size_t stride = w.size() / w.dim(0);
  data.erase(data.begin() + static_cast<std::ptrdiff_t>(channel * stride),
             data.begin() + static_cast<std::ptrdiff_t>((channel + 1) * stride));
  Shape shape = w.shape();
  shape[0] -= 1;
  w = Tensor(std::move(shape), std::move(data));
  if (!layer.conv.bias.empty()) layer.conv.bias.erase(layer.conv.bias.begin() + static_cast<std::ptrdiff_t>(channel));
  if (layer.bn) layer.bn->erase_channel(channel);
}

void erase_input_channel(Tensor& weight, std::size_t channel) {
  if (weight.rank() < 2 || channel >= weight.dim(1))
    throw Error(ErrorKind::IndexOutOfRange, "input channel " + std::to_string(channel));
  if (weight.dim(1) == 1) throw Error(ErrorKind::InvalidArgument, "cannot remove the last input channel");
  const std::size_t outer = weight.dim(0), in = weight.dim(1), inner = weight.size() / (outer * in);
  std::vector<float> data;
  data.reserve(weight.size() - outer * inner);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < in; ++i) {
      if (i == channel) continue;
      const float* src = weight.data().data() + (o * in + i) * inner;
      data.insert(data.end(), src, src + inner);
    }
  Shape shape = weight.shape();
  shape[1] -= 1;
  weight = Tensor(std::move(shape), std::move(data));
}

namespace {

void check_pair(const ConvBlock& layer, const Tensor& next_weight) {
  if (next_weight.rank() < 2 || next_weight.dim(1) != layer.conv.out_channels())
    throw Error(ErrorKind::ShapeMismatch, "next layer has " +
                                              std::to_string(next_weight.rank() < 2 ? 0 : next_weight.dim(1)) +
                                              " input channels, layer has " +
                                              std::to_string(layer.conv.out_channels()) + " outputs");
}

void fold_slice(Tensor& next_weight, std::size_t pruned, std::span<const std::size_t> kept,
                std::span<const double> s_hat) {
  if (s_hat.size() != kept.size()) throw Error(ErrorKind::ShapeMismatch, "s_hat length differs from kept set");
  const std::size_t outer = next_weight.dim(0), in = next_weight.dim(1), inner = next_weight.size() / (outer * in);
  if (pruned >= in) throw Error(ErrorKind::IndexOutOfRange, "pruned channel " + std::to_string(pruned));
  float* w = next_weight.data().data();
  for (std::size_t c = 0; c < kept.size(); ++c) {
    if (kept[c] >= in) throw Error(ErrorKind::IndexOutOfRange, "kept channel " + std::to_string(kept[c]));
    if (s_hat[c] == 0.0) continue;
    for (std::size_t o = 0; o < outer; ++o) {
      const float* src = w + (o * in + pruned) * inner;
      float* dst = w + (o * in + kept[c]) * inner;
      for (std::size_t e = 0; e < inner; ++e) dst[e] = static_cast<float>(dst[e] + s_hat[c] * src[e]);
    }
  }
}

}  // namespace

void apply_prune_reconstruction(ConvBlock& layer, Tensor& next_weight, std::size_t pruned,
                                std::span<const std::size_t> kept, std::span<const double> s_hat) {
  check_pair(layer, next_weight);
  fold_slice(next_weight, pruned, kept, s_hat);
  erase_input_channel(next_weight, pruned);
  erase_output_channel(layer, pruned);
}

void apply_prune_reconstruction(ConvBlock& layer, Tensor& next_weight, std::span<const std::size_t> pruned,
                                std::span<const std::size_t> kept, std::span<const std::vector<double>> s_hats) {
  check_pair(layer, next_weight);
  if (s_hats.size() != pruned.size()) throw Error(ErrorKind::ShapeMismatch, "one s_hat per pruned channel");
  for (std::size_t p = 0; p < pruned.size(); ++p) fold_slice(next_weight, pruned[p], kept, s_hats[p]);
  std::vector<std::size_t> order(pruned.begin(), pruned.end());
  std::sort(order.rbegin(), order.rend());
  for (std::size_t j : order) {
    erase_input_channel(next_weight, j);
    erase_output_channel(layer, j);
  }
}

void apply_quant_reconstruction(ConvBlock& layer, Tensor& next_weight, std::size_t channel, double s_tilde,
                                std::span<const float> dequant) {
  check_pair(layer, next_weight);
  if (channel >= layer.conv.out_channels())
    throw Error(ErrorKind::IndexOutOfRange, "quantized channel " + std::to_string(channel));
  auto dst = layer.conv.weight.slice0(channel);
  if (dequant.size() != dst.size()) throw Error(ErrorKind::ShapeMismatch, "dequantized channel length");
  std::copy(dequant.begin(), dequant.end(), dst.begin());
  if (s_tilde == 1.0) return;
  const std::size_t outer = next_weight.dim(0), in = next_weight.dim(1), inner = next_weight.size() / (outer * in);
  float* w = next_weight.data().data();
  for (std::size_t o = 0; o < outer; ++o) {
    float* slice = w + (o * in + channel) * inner;
    for (std::size_t e = 0; e < inner; ++e) slice[e] = static_cast<float>(s_tilde * slice[e]);
  }
}

ErrorTerms pruning_error_terms(const Tensor& normalized, std::size_t pruned, std::span<const std::size_t> kept,
                               std::span<const double> s_hat) {
  if (normalized.rank() != 4) throw Error(ErrorKind::ShapeMismatch, "normalized maps must be NCHW");
  if (s_hat.size() != kept.size()) throw Error(ErrorKind::ShapeMismatch, "s_hat length differs from kept set");
  const std::size_t batch = normalized.dim(0), channels = normalized.dim(1);
  const std::size_t h = normalized.dim(2), w = normalized.dim(3);
  if (pruned >= channels) throw Error(ErrorKind::IndexOutOfRange, "pruned channel " + std::to_string(pruned));
  for (std::size_t i : kept)
    if (i >= channels) throw Error(ErrorKind::IndexOutOfRange, "kept channel " + std::to_string(i));
  ErrorTerms t{Tensor({batch, 1, h, w}), Tensor({batch, 1, h, w}), Tensor{}};
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const double bj = normalized.at(n, pruned, y, x);
        double a = bj, e = std::max(bj, 0.0);
        for (std::size_t c = 0; c < kept.size(); ++c) {
          const double bi = normalized.at(n, kept[c], y, x);
          a -= s_hat[c] * bi;
          e -= s_hat[c] * std::max(bi, 0.0);
        }
        t.a.at(n, 0, y, x) = static_cast<float>(a);
        t.e_p.at(n, 0, y, x) = static_cast<float>(e);
      }
  return t;
}

Tensor quant_error_term(const Tensor& normalized, const Tensor& normalized_quantized, std::size_t channel,
                        double s_tilde) {
  if (normalized.shape() != normalized_quantized.shape() || normalized.rank() != 4)
    throw Error(ErrorKind::ShapeMismatch, "quant_error_term maps differ in shape");
  if (channel >= normalized.dim(1)) throw Error(ErrorKind::IndexOutOfRange, "channel " + std::to_string(channel));
  const std::size_t batch = normalized.dim(0), h = normalized.dim(2), w = normalized.dim(3);
  Tensor out({batch, 1, h, w});
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        out.at(n, 0, y, x) = static_cast<float>(normalized.at(n, channel, y, x) -
                                                s_tilde * normalized_quantized.at(n, channel, y, x));
  return out;
}

BoundCheck relu_bound_check(const Tensor& a, const Tensor& e_p) {
  if (a.shape() != e_p.shape()) throw Error(ErrorKind::ShapeMismatch, "A and e_p shapes differ");
  BoundCheck r;
  r.holds.resize(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double bound = 0.5 * (double(a[i]) + std::abs(double(a[i])));
    r.holds[i] = double(e_p[i]) <= bound;
    if (!r.holds[i]) ++r.violations;
  }
  return r;
}

}  // namespace udfc
