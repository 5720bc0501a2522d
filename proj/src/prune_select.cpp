#include "udfc/prune_select.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "udfc/error.hpp"

namespace udfc {

const char* to_string(Criterion c) noexcept { return c == Criterion::L1 ? "l1" : "l2"; }

Criterion parse_criterion(const std::string& s) {
  if (s == "l1") return Criterion::L1;
  if (s == "l2") return Criterion::L2;
  throw Error(ErrorKind::InvalidArgument, "criterion must be l1 or l2, got '" + s + "'");
}

std::vector<double> channel_norm(const Tensor& weights, Criterion criterion) {
  if (weights.rank() < 2) throw Error(ErrorKind::ShapeMismatch, "channel_norm needs at least 2 dimensions");
  std::vector<double> scores(weights.dim(0));
  for (std::size_t o = 0; o < scores.size(); ++o) {
    double acc = 0.0;
    for (float w : weights.slice0(o)) acc += criterion == Criterion::L1 ? std::abs(double(w)) : double(w) * w;
    scores[o] = criterion == Criterion::L1 ? acc : std::sqrt(acc);
  }
  return scores;
}

std::size_t pruned_count(std::size_t channels, double ratio) {
  if (!(ratio >= 0.0 && ratio < 1.0))
    throw Error(ErrorKind::InvalidArgument, "prune ratio must be in [0, 1), got " + std::to_string(ratio));
  return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(channels) + 1e-9));
}

PruneDecision select_pruned(std::span<const double> scores, double ratio, Criterion criterion,
                            std::size_t layer_index) {
  const std::size_t count = pruned_count(scores.size(), ratio);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  PruneDecision d;
  d.layer_index = layer_index;
  d.criterion = criterion;
  d.ratio = ratio;
  d.pruned.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count));
  d.kept.assign(order.begin() + static_cast<std::ptrdiff_t>(count), order.end());
  std::sort(d.pruned.begin(), d.pruned.end());
  std::sort(d.kept.begin(), d.kept.end());
  return d;
}

}  // namespace udfc
