#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "udfc/network.hpp"
#include "udfc/prune_select.hpp"
#include "udfc/tensor.hpp"

namespace udfc {

/// NCHW batch of standard-normal values shaped for `net`.
Tensor random_inputs(const Network& net, std::size_t batch, std::uint64_t seed);

enum class TapPoint { PreActivation, PostActivation };

/// Mean over elements of (a - b)^2 at conv block `tap`. Throws ShapeMismatch
/// when the two networks disagree on the tapped shape.
double feature_mse(const Network& a, const Network& b, std::size_t tap, const Tensor& inputs,
                   TapPoint point = TapPoint::PreActivation);

/// Deletes the planned channels and their next-layer slices, no compensation.
/// With wbits < 32 the survivors are quantized without any rescaling.
Network baseline_prune_only(const Network& net, std::span<const PruneDecision> plan, int wbits = 32);

/// Each pruned channel is handed to the single kept channel whose G-vector is
/// most cosine-similar, with a 1-D least-squares coefficient on the same loss.
/// Quantization (wbits < 32) is applied without rescaling, as in the prune-only baseline.
Network baseline_one_to_one(const Network& net, std::span<const PruneDecision> plan, double alpha1 = 0.01,
                            int wbits = 32);

/// Evaluation batch: NCHW data, one label per sample.
struct Dataset {
  Shape sample_shape;  // C, H, W
  Tensor data;         // [count, C, H, W]; empty when count is 0
  std::vector<std::uint32_t> labels;
  std::size_t class_count = 0;

  std::size_t count() const noexcept { return labels.size(); }
};

/// Reads data.json {count, shape, class_count}, data.bin, labels.bin.
Dataset load_dataset(const std::filesystem::path& dir);
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);

struct EvalResult {
  std::optional<double> top1;
  std::vector<std::optional<double>> feature_mse;      // per conv block, pre-activation; nullopt on shape mismatch
  std::vector<std::optional<double>> post_act_mse;     // per conv block, after the activation
  std::size_t trials = 0;
  std::uint64_t seed = 0;
};

/// Fraction of samples whose arg-max logit (lowest index on ties) equals the label.
double top1_accuracy(const Network& net, const Dataset& dataset, std::size_t batch = 64);

EvalResult evaluate_accuracy(const Network& net, const Dataset& dataset);

/// Feature MSE of `net` against `baseline` at every conv block, averaged
/// over `trials` random batches drawn from `seed`; top-1 when a dataset is given.
EvalResult evaluate(const Network& net, const Network* baseline, const Dataset* dataset, std::size_t trials,
                    std::uint64_t seed, std::size_t batch = 4);

}  // namespace udfc
