#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "udfc/network.hpp"
#include "udfc/prune_select.hpp"

namespace udfc {

struct CompressionConfig {
  double prune_ratio = 0.0;                        // uniform per-layer ratio in [0, 1)
  std::map<std::size_t, double> ratio_overrides;   // conv block index -> ratio
  Criterion criterion = Criterion::L1;
  int wbits = 32;                                  // 32 disables quantization
  double alpha1 = 0.01;
  double alpha2 = 0.008;
  std::vector<std::size_t> skip_layers;            // conv block indices left untouched
  std::optional<double> ridge;                     // unset: 1e-8 * trace(Q^T Q) / |kept|
  std::uint64_t seed = 0;

  double ratio_for(std::size_t block) const;
  void validate() const;
};

/// How a pruned channel's contribution is handed to the next layer.
enum class Compensation {
  Reconstruct,  // closed-form multi-channel scales
  None,         // plain deletion
  OneToOne,     // single most similar kept channel, 1-D least squares
};

const char* to_string(Compensation c) noexcept;

struct LayerReport {
  std::size_t block = 0;
  bool skipped = false;
  PruneDecision decision;
  std::vector<std::vector<double>> s_hat;  // one vector over `decision.kept` per pruned channel
  std::vector<double> s_tilde;             // per surviving channel, empty without quantization
  double l_p = 0.0;
  double l_q = 0.0;
  double l_re = 0.0;
  double ridge = 0.0;                      // largest ridge used by this layer's solves
  std::size_t dead_channels = 0;
  std::size_t singular_fallbacks = 0;
  std::size_t degenerate_scales = 0;
  int wbits = 32;
  double size_bytes = 0.0;
  std::uint64_t macs = 0;
  double seconds = 0.0;

  double s_hat_norm() const;
};

struct HeadReport {
  int wbits = 32;
  double size_bytes = 0.0;
  std::uint64_t macs = 0;
};

struct Report {
  CompressionConfig config;
  Compensation compensation = Compensation::Reconstruct;
  std::vector<LayerReport> layers;
  std::optional<HeadReport> head;
  double size_before = 0.0;
  double size_after = 0.0;
  std::uint64_t flops_before = 0;
  std::uint64_t flops_after = 0;
  std::vector<std::string> warnings;
  double seconds = 0.0;

  std::vector<PruneDecision> plan() const;
};

struct CompressionResult {
  Network network;
  Report report;
};

/// Walks conv blocks in order. For block l: select pruned channels, solve the
/// scales on the full-precision weights and fold them into the next layer,
/// then (wbits < 32) quantize the surviving channels and fold s~ into the
/// next layer. The last conv block and the head are quantized, never pruned.
CompressionResult compress(const Network& net, const CompressionConfig& cfg);

/// Same traversal with a chosen compensation. When `plan` is given, its
/// decisions (indexed by conv block) replace channel selection.
CompressionResult compress(const Network& net, const CompressionConfig& cfg, Compensation compensation,
                           std::span<const PruneDecision> plan = {});

struct SweepCell {
  double ratio = 0.0;
  int wbits = 32;
  double alpha1 = 0.0;
  double alpha2 = 0.0;
  Report report;
  std::optional<double> feature_mse;  // filled when a probe is supplied
};

/// Random-input probe: MSE at the pre-activation of conv block `tap_block`.
struct SweepProbe {
  std::size_t tap_block = 0;
  std::size_t batch = 8;
  std::uint64_t seed = 0;
};

/// One compress per (ratio, wbits) pair, ratios outermost.
std::vector<SweepCell> sweep(const Network& net, const CompressionConfig& base, std::span<const double> ratios,
                             std::span<const int> wbits, const std::optional<SweepProbe>& probe = std::nullopt);

/// One compress per alpha1 value.
std::vector<SweepCell> sweep_alpha1(const Network& net, const CompressionConfig& base,
                                    std::span<const double> alpha1_values,
                                    const std::optional<SweepProbe>& probe = std::nullopt);

}  // namespace udfc
