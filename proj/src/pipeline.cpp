#include "udfc/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <limits>
#include <numeric>
#include <cmath>
#include <string>

#include "udfc/accounting.hpp"
#include "udfc/error.hpp"
#include "udfc/harness.hpp"
#include "udfc/parallel.hpp"
#include "udfc/quantizer.hpp"
#include "udfc/reconstructor.hpp"

namespace udfc {

double CompressionConfig::ratio_for(std::size_t block) const {
  const auto it = ratio_overrides.find(block);
  return it == ratio_overrides.end() ? prune_ratio : it->second;
}

void CompressionConfig::validate() const {
  auto check_ratio = [](double r) {
    if (!(r >= 0.0 && r < 1.0))
      throw Error(ErrorKind::InvalidArgument, "prune ratio must be in [0, 1), got " + std::to_string(r));
  };
  check_ratio(prune_ratio);
  for (const auto& [block, r] : ratio_overrides) check_ratio(r);
  if (wbits < kMinQuantBits || wbits > 32 || (wbits > kMaxQuantBits && wbits != 32))
    throw Error(ErrorKind::InvalidArgument, "wbits must be in [2, 8] or 32, got " + std::to_string(wbits));
  if (!(alpha1 >= 0.0) || !(alpha2 >= 0.0)) throw Error(ErrorKind::InvalidArgument, "alphas must be >= 0");
  if (ridge && !(*ridge >= 0.0)) throw Error(ErrorKind::InvalidArgument, "ridge must be >= 0");
}

const char* to_string(Compensation c) noexcept {
  switch (c) {
    case Compensation::Reconstruct: return "reconstruct";
    case Compensation::None: return "prune-only";
    case Compensation::OneToOne: return "one-to-one";
  }
  return "?";
}

double LayerReport::s_hat_norm() const {
  double s = 0.0;
  for (const auto& v : s_hat)
    for (double x : v) s += x * x;
  return std::sqrt(s);
}

std::vector<PruneDecision> Report::plan() const {
  std::vector<PruneDecision> out;
  for (const auto& l : layers) out.push_back(l.decision);
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Successor {
  Tensor* weight = nullptr;
  bool is_conv = false;
};

/// Next consumer of block `position`'s channels: a conv block across max
/// pools, or the head when the block is followed by GlobalAvgPool -> Linear.
Successor find_successor(Network& net, std::size_t position) {
  for (std::size_t i = position + 1; i < net.layers.size(); ++i) {
    Layer& layer = net.layers[i];
    if (auto* b = std::get_if<ConvBlock>(&layer)) return {&b->conv.weight, true};
    if (std::holds_alternative<MaxPool2x2>(layer)) continue;
    if (std::holds_alternative<GlobalAvgPool>(layer)) {
      if (i + 1 < net.layers.size())
        if (auto* fc = std::get_if<Linear>(&net.layers[i + 1])) return {&fc->weight, false};
      return {};
    }
    return {};
  }
  return {};
}

std::vector<double> one_to_one_scales(const PruningSystem& sys, double alpha1) {
  const double v_norm = std::sqrt(std::inner_product(sys.target.begin(), sys.target.end(), sys.target.begin(), 0.0));
  std::size_t best = 0;
  double best_cos = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < sys.columns(); ++c) {
    const auto col = sys.column(c);
    const double gg = std::inner_product(col.begin(), col.end(), col.begin(), 0.0);
    if (gg == 0.0 || v_norm == 0.0) continue;
    const double cos = std::inner_product(col.begin(), col.end(), sys.target.begin(), 0.0) / (std::sqrt(gg) * v_norm);
    if (cos > best_cos) {
      best_cos = cos;
      best = c;
    }
  }
  std::vector<double> s(sys.columns(), 0.0);
  const auto col = sys.column(best);
  const double k_i = sys.offsets[best];
  const double num = std::inner_product(col.begin(), col.end(), sys.target.begin(), 0.0) +
                     alpha1 * k_i * sys.target_offset;
  const double den = std::inner_product(col.begin(), col.end(), col.begin(), 0.0) + alpha1 * k_i * k_i;
  if (den > 0.0) s[best] = num / den;
  return s;
}

void prune_block(ConvBlock& block, Tensor& next_weight, const CompressionConfig& cfg, Compensation mode,
                 LayerReport& lr, std::vector<std::string>& warnings) {
  const PruneDecision& d = lr.decision;
  const std::size_t count = d.pruned.size();
  lr.s_hat.assign(count, std::vector<double>(d.kept.size(), 0.0));
  std::vector<double> losses(count, 0.0), ridges(count, 0.0);
  std::vector<char> dead(count, 0), singular(count, 0);

  std::optional<ChannelGram> gram;
  if (mode == Compensation::Reconstruct) gram.emplace(block);

  parallel_for(count, [&](std::size_t p) {
    const std::size_t j = d.pruned[p];
    if (is_dead_channel(block, j)) {
      dead[p] = 1;
      return;
    }
    const PruningSystem sys = build_pruning_system(block, j, d.kept);
    if (mode == Compensation::Reconstruct) {
      const NormalEquations eq = gram->normal_equations(j, d.kept, cfg.alpha1);
      ridges[p] = cfg.ridge ? *cfg.ridge : default_ridge(eq);
      try {
        lr.s_hat[p] = solve_pruning_scales(eq, ridges[p]);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::Singular) throw;
        singular[p] = 1;
      }
    } else if (mode == Compensation::OneToOne) {
      lr.s_hat[p] = one_to_one_scales(sys, cfg.alpha1);
    }
    losses[p] = pruning_loss(sys, lr.s_hat[p], cfg.alpha1);
  });

  for (std::size_t p = 0; p < count; ++p) {
    lr.l_p += losses[p];
    lr.ridge = std::max(lr.ridge, ridges[p]);
    lr.dead_channels += dead[p];
    if (singular[p]) {
      ++lr.singular_fallbacks;
      warnings.push_back("block " + std::to_string(lr.block) + ": singular system for channel " +
                         std::to_string(d.pruned[p]) + ", pruned without compensation");
    }
  }
  apply_prune_reconstruction(block, next_weight, d.pruned, d.kept, lr.s_hat);
}

void quantize_block(ConvBlock& block, Tensor* next_weight, const CompressionConfig& cfg, Compensation mode,
                    LayerReport& lr) {
  const QuantizedLayer q = quantize_layer(block.conv.weight, cfg.wbits);
  const std::size_t n = block.conv.out_channels();
  lr.s_tilde.assign(n, 1.0);
  std::vector<double> losses(n, 0.0);
  std::vector<char> degenerate(n, 0);
  parallel_for(n, [&](std::size_t m) {
    const QuantSystem sys = build_quant_system(block, m, q.channels[m].dequant);
    if (next_weight && mode == Compensation::Reconstruct) {
      const QuantScale s = solve_quant_scale(sys, cfg.alpha2);
      lr.s_tilde[m] = s.value;
      degenerate[m] = s.degenerate;
    }
    losses[m] = quant_loss(sys, lr.s_tilde[m], cfg.alpha2);
  });
  for (std::size_t m = 0; m < n; ++m) {
    lr.l_q += losses[m];
    lr.degenerate_scales += degenerate[m];
    if (next_weight) {
      apply_quant_reconstruction(block, *next_weight, m, lr.s_tilde[m], q.channels[m].dequant);
    } else {
      const auto& dq = q.channels[m].dequant;
      std::copy(dq.begin(), dq.end(), block.conv.weight.slice0(m).begin());
    }
  }
  block.wbits = cfg.wbits;
}

}  // namespace

CompressionResult compress(const Network& net, const CompressionConfig& cfg) {
  return compress(net, cfg, Compensation::Reconstruct);
}

CompressionResult compress(const Network& net, const CompressionConfig& cfg, Compensation compensation,
                           std::span<const PruneDecision> plan) {
  const auto start = Clock::now();
  validate(net);
  cfg.validate();

  CompressionResult result{net, Report{}};
  Network& out = result.network;
  Report& report = result.report;
  report.config = cfg;
  report.compensation = compensation;
  report.size_before = model_size_bytes(net);
  report.flops_before = flops(net);

  const auto positions = out.conv_positions();
  if (!plan.empty() && plan.size() != positions.size())
    throw Error(ErrorKind::InvalidArgument, "plan has " + std::to_string(plan.size()) + " decisions for " +
                                                std::to_string(positions.size()) + " conv blocks");

  for (std::size_t l = 0; l < positions.size(); ++l) {
    const auto layer_start = Clock::now();
    ConvBlock& block = std::get<ConvBlock>(out.layers[positions[l]]);
    const Successor next = find_successor(out, positions[l]);
    LayerReport lr;
    lr.block = l;
    lr.decision.layer_index = l;
    lr.decision.criterion = cfg.criterion;

    const bool skipped = std::find(cfg.skip_layers.begin(), cfg.skip_layers.end(), l) != cfg.skip_layers.end();
    const double ratio = cfg.ratio_for(l);
    if (skipped) {
      lr.skipped = true;
    } else {
      const bool prunable = next.is_conv && block.bn.has_value();
      if (!plan.empty()) {
        lr.decision = plan[l];
        lr.decision.layer_index = l;
        if (!lr.decision.pruned.empty() && !prunable)
          throw Error(ErrorKind::InvalidArgument, "plan prunes block " + std::to_string(l) +
                                                      ", which has no batch norm or no successor conv");
      } else if (prunable) {
        lr.decision = select_pruned(channel_norm(block.conv.weight, cfg.criterion), ratio, cfg.criterion, l);
      } else {
        lr.decision.kept.resize(block.conv.out_channels());
        std::iota(lr.decision.kept.begin(), lr.decision.kept.end(), std::size_t{0});
        if (!block.bn && next.is_conv && ratio > 0.0)
          report.warnings.push_back("block " + std::to_string(l) + ": no batch norm, not pruned");
      }
      lr.decision.ratio = plan.empty() ? ratio : lr.decision.ratio;
      if (!lr.decision.pruned.empty()) prune_block(block, *next.weight, cfg, compensation, lr, report.warnings);
      if (cfg.wbits < 32) quantize_block(block, next.weight, cfg, compensation, lr);
    }
    lr.l_re = lr.l_p + lr.l_q;
    lr.wbits = block.wbits;
    lr.seconds = seconds_since(layer_start);
    report.layers.push_back(std::move(lr));
  }

  if (Linear* fc = out.head(); fc && cfg.wbits < 32) {
    fc->weight = quantize_layer(fc->weight, cfg.wbits).dequant;
    fc->wbits = cfg.wbits;
  }

  validate(out);
  const auto macs = layer_macs(out);
  for (std::size_t l = 0; l < positions.size(); ++l) {
    report.layers[l].size_bytes = layer_size_bytes(out.layers[positions[l]], report.layers[l].wbits);
    report.layers[l].macs = macs[positions[l]];
  }
  if (const Linear* fc = out.head())
    report.head = HeadReport{fc->wbits, layer_size_bytes(out.layers.back(), fc->wbits), macs.back()};
  report.size_after = model_size_bytes(out);
  report.flops_after = flops(out);
  report.seconds = seconds_since(start);
  return result;
}

namespace {

SweepCell run_cell(const Network& net, const CompressionConfig& cfg, const std::optional<SweepProbe>& probe) {
  CompressionResult r = compress(net, cfg);
  SweepCell cell{cfg.prune_ratio, cfg.wbits, cfg.alpha1, cfg.alpha2, std::move(r.report), std::nullopt};
  if (probe) {
    const Tensor inputs = random_inputs(net, probe->batch, probe->seed);
    cell.feature_mse = feature_mse(net, r.network, probe->tap_block, inputs);
  }
  return cell;
}

}  // namespace

std::vector<SweepCell> sweep(const Network& net, const CompressionConfig& base, std::span<const double> ratios,
                             std::span<const int> wbits, const std::optional<SweepProbe>& probe) {
  std::vector<SweepCell> cells;
  for (double r : ratios)
    for (int k : wbits) {
      CompressionConfig cfg = base;
      cfg.prune_ratio = r;
      cfg.wbits = k;
      cells.push_back(run_cell(net, cfg, probe));
    }
  return cells;
}

std::vector<SweepCell> sweep_alpha1(const Network& net, const CompressionConfig& base,
                                    std::span<const double> alpha1_values, const std::optional<SweepProbe>& probe) {
  std::vector<SweepCell> cells;
  for (double a : alpha1_values) {
    CompressionConfig cfg = base;
    cfg.alpha1 = a;
    cells.push_back(run_cell(net, cfg, probe));
  }
  return cells;
}

}  // namespace udfc
