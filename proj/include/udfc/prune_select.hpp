#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "udfc/tensor.hpp"

namespace udfc {

enum class Criterion { L1, L2 };

const char* to_string(Criterion c) noexcept;
Criterion parse_criterion(const std::string& s);

struct PruneDecision {
  std::size_t layer_index = 0;
  std::vector<std::size_t> pruned;  // sorted ascending
  std::vector<std::size_t> kept;    // sorted ascending
  Criterion criterion = Criterion::L1;
  double ratio = 0.0;
};

/// Per-output-channel l1 or l2 norm of an OIHW (or O x anything) weight tensor.
std::vector<double> channel_norm(const Tensor& weights, Criterion criterion);

/// floor(ratio * channels); a 1e-9 guard absorbs products like 0.3 * 10.
std::size_t pruned_count(std::size_t channels, double ratio);

/// Prunes the floor(ratio * N) lowest scores; equal scores prune the lower index first.
PruneDecision select_pruned(std::span<const double> scores, double ratio, Criterion criterion = Criterion::L1,
                            std::size_t layer_index = 0);

}  // namespace udfc
