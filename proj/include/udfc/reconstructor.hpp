#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "udfc/network.hpp"
#include "udfc/tensor.hpp"

namespace udfc {

/// |gamma| below this marks a pruned channel as dead: its normalized output is
/// the constant beta, which no weight combination of other channels reproduces.
inline constexpr double kDeadGamma = 1e-12;

/// Per-channel affine map from raw convolution output (bias excluded) to the
/// normalized map: X_c = scale_c * (W_c * input) + shift_c, before activation.
/// With BN: scale = gamma/sigma, shift = beta - gamma*(mu - bias)/sigma.
/// Without BN: scale = 1, shift = bias.
struct ChannelAffine {
  std::vector<double> scale;
  std::vector<double> shift;
};

ChannelAffine block_affine(const ConvBlock& block);

bool is_dead_channel(const ConvBlock& block, std::size_t channel);

/// Least-squares system for representing pruned channel j by the kept channels.
///
///   G_i = (scale_i / scale_j) * W_i      (the gamma_i sigma_j / (sigma_i gamma_j) ratio)
///   V   = W_j
///   Q   = [G_i for i in kept]            (D x |kept|, columns contiguous)
///   P   = [K_i for i in kept],  K_j      (normalized offsets)
///
/// Every vector is the channel's I x K x K slice flattened in IHW row-major order.
struct PruningSystem {
  std::size_t pruned = 0;
  std::vector<std::size_t> kept;
  std::size_t dim = 0;          // D = N_in * K * K
  std::vector<double> basis;    // Q, column-major
  std::vector<double> target;   // V
  std::vector<double> offsets;  // P
  double target_offset = 0.0;   // K_j

  std::size_t columns() const noexcept { return kept.size(); }
  std::span<const double> column(std::size_t c) const {
    return std::span<const double>(basis).subspan(c * dim, dim);
  }
};

/// Throws ErrorKind::DeadChannel when |gamma_j| < kDeadGamma, Validation when
/// the block has no BN, InvalidArgument for an empty or inconsistent kept set.
PruningSystem build_pruning_system(const ConvBlock& layer, std::size_t pruned, std::span<const std::size_t> kept);

/// (Q^T Q + alpha1 P P^T) s = Q^T V + alpha1 P K_j, stored dense row-major.
struct NormalEquations {
  std::size_t size = 0;
  std::vector<double> matrix;
  std::vector<double> rhs;
  double gram_trace = 0.0;  // trace(Q^T Q), drives the default ridge
};

NormalEquations normal_equations(const PruningSystem& system, double alpha1);

/// 1e-8 * trace(Q^T Q) / |kept|.
double default_ridge(const NormalEquations& eq);

/// Solves (matrix + ridge I) s = rhs by Cholesky. Throws ErrorKind::Singular
/// when the system is not numerically positive definite.
std::vector<double> solve_pruning_scales(const NormalEquations& eq, double ridge);
std::vector<double> solve_pruning_scales(const PruningSystem& system, double alpha1, double ridge);

/// Pairwise weight inner products of one layer, so the normal equations of
/// every pruned channel come from one O(N^2 D) pass instead of O(|kept|^2 D)
/// per channel. Yields the same system as normal_equations(build_pruning_system(...)).
class ChannelGram {
 public:
  explicit ChannelGram(const ConvBlock& layer);
  NormalEquations normal_equations(std::size_t pruned, std::span<const std::size_t> kept, double alpha1) const;

 private:
  std::size_t channels_;
  std::vector<double> gram_;
  ChannelAffine affine_;
};

/// ||V - Q s||^2 + alpha1 (K_j - P.s)^2
double pruning_loss(const PruningSystem& system, std::span<const double> s_hat, double alpha1);

/// -2 Q^T V + 2 Q^T Q s + alpha1 (-2 P K_j + 2 P P^T s)
std::vector<double> loss_gradient(const PruningSystem& system, std::span<const double> s_hat, double alpha1);

/// Quantities for quantized channel m: R = scale_m W_m, R~ = scale_m W~_m, K_m.
struct QuantSystem {
  std::vector<double> original;   // R
  std::vector<double> quantized;  // R~
  double offset = 0.0;            // K_m
};

QuantSystem build_quant_system(const ConvBlock& layer, std::size_t channel, std::span<const float> dequant);

struct QuantScale {
  double value = 1.0;
  bool degenerate = false;  // zero denominator; value forced to 1
};

/// Minimizer of ||R - s R~||^2 + alpha2 (K - s K)^2:
///   s = (R~.R + alpha2 K^2) / (R~.R~ + alpha2 K^2)
QuantScale solve_quant_scale(std::span<const double> original, std::span<const double> quantized, double offset,
                             double alpha2);
QuantScale solve_quant_scale(const QuantSystem& system, double alpha2);

double quant_loss(std::span<const double> original, std::span<const double> quantized, double offset,
                  double s_tilde, double alpha2);
double quant_loss(const QuantSystem& system, double s_tilde, double alpha2);

/// l_re = l_p + l_q for one pruned and one quantized channel.
double total_loss(const PruningSystem& pruning, std::span<const double> s_hat, double alpha1,
                  const QuantSystem& quant, double s_tilde, double alpha2);

/// Folds pruned output channel j of `layer` into the next layer and removes it:
/// next[:, i] += s_hat[c] * next[:, j] for kept[c] = i, then input slice j of
/// `next_weight` and output channel j of `layer` (weights, bias, BN) are deleted.
/// `next_weight` has input channels on axis 1 (OIHW conv or out x in linear).
void apply_prune_reconstruction(ConvBlock& layer, Tensor& next_weight, std::size_t pruned,
                                std::span<const std::size_t> kept, std::span<const double> s_hat);

/// Same for several pruned channels of one layer, each solved against the
/// original weights: all folds first, then all deletions.
void apply_prune_reconstruction(ConvBlock& layer, Tensor& next_weight, std::span<const std::size_t> pruned,
                                std::span<const std::size_t> kept, std::span<const std::vector<double>> s_hats);

/// Replaces output channel m of `layer` with its quantized weights and scales
/// input slice m of the next layer by s_tilde. BN is left unchanged.
void apply_quant_reconstruction(ConvBlock& layer, Tensor& next_weight, std::size_t channel, double s_tilde,
                                std::span<const float> dequant);

void erase_output_channel(ConvBlock& layer, std::size_t channel);
void erase_input_channel(Tensor& weight, std::size_t channel);

/// Difference maps for the activation analysis, all [N, 1, H, W].
struct ErrorTerms {
  Tensor a;    // B_j - sum s_i B_i          (pre-activation residual)
  Tensor e_p;  // ReLU(B_j) - sum s_i ReLU(B_i)
  Tensor e_q;  // B_m - s~ B~_m; empty unless produced by quant_error_term
};

/// `normalized` holds the BN outputs (before activation) of layer l, NCHW.
ErrorTerms pruning_error_terms(const Tensor& normalized, std::size_t pruned, std::span<const std::size_t> kept,
                               std::span<const double> s_hat);

/// B(Z_m) - s~ B(Z~_m) from the normalized maps of the original and quantized layer.
Tensor quant_error_term(const Tensor& normalized, const Tensor& normalized_quantized, std::size_t channel,
                        double s_tilde);

struct BoundCheck {
  std::vector<bool> holds;
  std::size_t violations = 0;
};

/// Elementwise e_p <= (A + |A|) / 2.
BoundCheck relu_bound_check(const Tensor& a, const Tensor& e_p);

}  // namespace udfc
