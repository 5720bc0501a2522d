// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "udfc/accounting.hpp"
#include "udfc/forward.hpp"
#include "udfc/harness.hpp"
#include "udfc/parallel.hpp"
#include "udfc/pipeline.hpp"
#include "udfc/quantizer.hpp"
#include "udfc/reconstructor.hpp"
#include "udfc/topology.hpp"

using namespace udfc;

namespace {

// Pinned tolerances and budgets.
constexpr double kSolverRelTol = 1e-5;
constexpr int kSolverSystems = 100;
constexpr int kPerturbations = 1000;
constexpr double kSolverSeconds = 5.0;
constexpr double kGradRelTol = 1e-4;
constexpr double kGradStep = 1e-4;
constexpr int kGradInstances = 50;
constexpr double kQuantScaleTol = 1e-6;
constexpr int kQuantScaleChannels = 100;
constexpr double kRecoveryMaxAbs = 1e-4;
constexpr double kRecoveryLoss = 1e-10;
constexpr int kRecoveryInputs = 20;
constexpr int kBoundTensors = 100;
constexpr double kPruneOnlyWinRate = 0.90;
constexpr double kOneToOneWinRate = 0.70;
constexpr int kDirectionalTrials = 50;
constexpr double kDirectionalSeconds = 60.0;
constexpr std::size_t kQuantWeights = 1000000;
constexpr double kThroughputSeconds = 2.0;
constexpr std::size_t kThroughputMaxParams = 1000000;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

int failures = 0;

void report(int id, const char* name, bool pass, const std::string& detail) {
  std::printf("[%s] %2d %s: %s\n", pass ? "PASS" : "FAIL", id, name, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, float sd = 1.0f) {
  Tensor t(shape);
  std::normal_distribution<float> n(0.0f, sd);
  for (float& v : t.data()) v = n(rng);
  return t;
}

BatchNorm random_bn(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> g(0.5f, 1.5f), b(-0.5f, 0.5f), m(-1.0f, 1.0f), v(0.25f, 4.0f);
  BatchNorm bn;
  for (std::size_t c = 0; c < n; ++c) {
    bn.gamma.push_back(g(rng));
    bn.beta.push_back(b(rng));
    bn.mean.push_back(m(rng));
    bn.var.push_back(v(rng));
  }
  return bn;
}

oracle::LsProblem to_problem(const PruningSystem& s, double alpha) {
  oracle::LsProblem p;
  for (std::size_t c = 0; c < s.columns(); ++c) p.q.emplace_back(s.column(c).begin(), s.column(c).end());
  p.v = s.target;
  p.p = s.offsets;
  p.kj = s.target_offset;
  p.alpha = alpha;
  return p;
}

// A random layer with D = in * k * k <= 36 and a random kept set of size <= 8.
PruningSystem random_system(std::mt19937_64& rng) {
  const std::size_t in = std::uniform_int_distribution<std::size_t>(1, 4)(rng);
  const std::size_t k = in == 1 ? 3 : std::uniform_int_distribution<int>(0, 1)(rng) ? 3 : 1;
  const std::size_t kept_n = std::uniform_int_distribution<std::size_t>(1, std::min<std::size_t>(8, in * k * k))(rng);
  ConvBlock b;
  b.conv.weight = random_tensor({kept_n + 1, in, k, k}, rng, 0.5f);
  b.bn = random_bn(kept_n + 1, rng);
  const std::size_t j = std::uniform_int_distribution<std::size_t>(0, kept_n)(rng);
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i <= kept_n; ++i)
    if (i != j) kept.push_back(i);
  return build_pruning_system(b, j, kept);
}

void criterion1() {
  const auto start = Clock::now();
  std::mt19937_64 rng(101);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double alpha1 = 0.01;
  double worst_rel = 0.0;
  std::size_t beaten = 0, max_dim = 0, max_kept = 0;
  for (int t = 0; t < kSolverSystems; ++t) {
    const PruningSystem s = random_system(rng);
    max_dim = std::max(max_dim, s.dim);
    max_kept = std::max(max_kept, s.columns());
    const auto x = solve_pruning_scales(s, alpha1, 0.0);
    worst_rel = std::max(worst_rel, oracle::rel_diff(x, oracle::ls_solve(to_problem(s, alpha1))));
    const double best = pruning_loss(s, x, alpha1);
    std::vector<double> p(x.size());
    for (int k = 0; k < kPerturbations; ++k) {
      double norm = 0.0;
      for (double& v : p) {
        v = n(rng);
        norm += v * v;
      }
      const double r = u(rng) / std::sqrt(norm);
      for (std::size_t i = 0; i < p.size(); ++i) p[i] = x[i] + r * p[i];
      if (pruning_loss(s, p, alpha1) < best) ++beaten;
    }
  }
  const double secs = seconds_since(start);
  report(1, "solver-oracle equivalence", worst_rel <= kSolverRelTol && beaten == 0 && secs < kSolverSeconds,
         "worst rel " + fmt("%.2e", worst_rel) + ", " + std::to_string(beaten) + " of " +
             std::to_string(kSolverSystems * kPerturbations) + " perturbations lower, max D " +
             std::to_string(max_dim) + ", max kept " + std::to_string(max_kept) + ", " + fmt("%.2f s", secs));
}

void criterion2() {
  std::mt19937_64 rng(202);
  std::normal_distribution<double> n(0.0, 1.0);
  double worst = 0.0;
  for (int t = 0; t < kGradInstances; ++t) {
    const PruningSystem s = random_system(rng);
    const double alpha1 = std::uniform_real_distribution<double>(0.0, 0.1)(rng);
    std::vector<double> x(s.columns());
    for (double& v : x) v = n(rng);
    const auto g = loss_gradient(s, x, alpha1);
    const auto fd =
        oracle::central_diff([&](std::span<const double> v) { return pruning_loss(s, v, alpha1); }, x, kGradStep);
    worst = std::max(worst, oracle::rel_diff(g, fd));
  }
  report(2, "gradient check", worst <= kGradRelTol, "worst rel " + fmt("%.2e", worst));
}

void criterion3() {
  std::mt19937_64 rng(303);
  const double alpha2 = 0.008;
  double worst = 0.0;
  bool identity_exact = true;
  for (int k : {2, 4, 6, 8}) {
    for (int t = 0; t < kQuantScaleChannels; ++t) {
      ConvBlock b;
      b.conv.weight = random_tensor({1, 3, 3, 3}, rng, 0.5f);
      b.bn = random_bn(1, rng);
      const auto q = quantize_channel(b.conv.weight.slice0(0), k);
      const QuantSystem qs = build_quant_system(b, 0, q.dequant);
      const double s = solve_quant_scale(qs, alpha2).value;
      const double ref = oracle::minimize_1d([&](double v) { return quant_loss(qs, v, alpha2); }, -4.0, 4.0);
      worst = std::max(worst, std::abs(s - ref));
      const auto w = b.conv.weight.slice0(0);
      const QuantSystem same = build_quant_system(b, 0, std::vector<float>(w.begin(), w.end()));
      if (solve_quant_scale(same, alpha2).value != 1.0) identity_exact = false;
    }
  }
  report(3, "quantization scale correctness", worst <= kQuantScaleTol && identity_exact,
         "worst |s - oracle| " + fmt("%.2e", worst) + ", unquantized channel gives 1 exactly: " +
             (identity_exact ? "yes" : "no"));
}

// Layer 0 has `kept` independent channels; every further channel is built so
// that its normalized output is an exact combination of the kept ones. Under
// ReLU only a positive multiple of one kept channel survives the activation
// exactly, so that case uses one-term combinations.
Network recovery_net(bool relu, std::mt19937_64& rng, std::size_t kept, std::size_t extra) {
  const std::size_t n = kept + extra;
  ConvBlock b;
  b.conv.weight = random_tensor({n, 3, 3, 3}, rng, 0.5f);
  b.bn = random_bn(n, rng);
  b.bn->eps = 1e-5;
  b.activation = relu ? Activation::ReLU : Activation::Identity;
  const ChannelAffine a = block_affine(b);
  std::uniform_real_distribution<double> coef(0.3, 1.5);
  std::uniform_int_distribution<std::size_t> pick(0, kept - 1);
  for (std::size_t j = kept; j < n; ++j) {
    std::vector<double> c(kept, 0.0);
    if (relu) {
      c[pick(rng)] = coef(rng);
    } else {
      for (double& v : c) v = coef(rng) * (pick(rng) % 2 ? 1.0 : -1.0);
    }
    // Target: scale_j W_j = sum c_i scale_i W_i and shift_j = sum c_i shift_i.
    const double scale_j = a.scale[j];
    auto wj = b.conv.weight.slice0(j);
    for (std::size_t d = 0; d < wj.size(); ++d) {
      double v = 0.0;
      for (std::size_t i = 0; i < kept; ++i) v += c[i] * a.scale[i] * b.conv.weight.slice0(i)[d];
      wj[d] = static_cast<float>(v / scale_j);
    }
    double shift = 0.0;
    for (std::size_t i = 0; i < kept; ++i) shift += c[i] * a.shift[i];
    const double sigma = b.bn->sigma(j);
    b.bn->beta[j] = static_cast<float>(shift + b.bn->gamma[j] * b.bn->mean[j] / sigma);
  }
  Network net;
  net.input_shape = {3, 8, 8};
  net.layers.emplace_back(b);
  ConvBlock c;
  c.conv.weight = random_tensor({6, n, 3, 3}, rng, 0.3f);
  c.conv.pad = 1;
  c.bn = random_bn(6, rng);
  net.layers.emplace_back(c);
  std::get<ConvBlock>(net.layers[0]).conv.pad = 1;
  return net;
}

void criterion4() {
  std::mt19937_64 rng(404);
  double worst_map = 0.0, worst_loss = 0.0;
  for (bool relu : {true, false}) {
    for (int rep = 0; rep < 3; ++rep) {
      const std::size_t kept = 5, extra = 3;
      const Network net = recovery_net(relu, rng, kept, extra);
      PruneDecision d0, d1;
      for (std::size_t i = 0; i < kept; ++i) d0.kept.push_back(i);
      for (std::size_t j = kept; j < kept + extra; ++j) d0.pruned.push_back(j);
      for (std::size_t i = 0; i < 6; ++i) d1.kept.push_back(i);
      const std::vector<PruneDecision> plan{d0, d1};
      const CompressionResult r = compress(net, CompressionConfig{}, Compensation::Reconstruct, plan);
      worst_loss = std::max(worst_loss, r.report.layers[0].l_p);
      const std::vector<std::size_t> tap{1};
      for (int t = 0; t < kRecoveryInputs; ++t) {
        const Tensor x = random_tensor({1, 3, 8, 8}, rng);
        const Tensor a = forward(net, x, tap).taps.at(1).pre_bn;
        const Tensor b = forward(r.network, x, tap).taps.at(1).pre_bn;
        worst_map = std::max(worst_map, oracle::max_abs_diff(a.data(), b.data()));
      }
    }
  }
  report(4, "exact recovery", worst_map <= kRecoveryMaxAbs && worst_loss <= kRecoveryLoss,
         "max |dZ| " + fmt("%.2e", worst_map) + ", max l_p " + fmt("%.2e", worst_loss) +
             " (ReLU multiples and identity-activation combinations)");
}

void criterion5() {
  std::mt19937_64 rng(505);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  std::size_t violations = 0, elements = 0;
  for (int t = 0; t < kBoundTensors; ++t) {
    ConvBlock b;
    b.conv.weight = random_tensor({6, 3, 3, 3}, rng, 0.5f);
    b.conv.pad = 1;
    b.bn = random_bn(6, rng);
    const Tensor x = random_tensor({2, 3, 6, 6}, rng);
    const Tensor normalized = batch_norm(conv2d(x, b.conv), *b.bn);
    const std::vector<std::size_t> kept{0, 1, 2, 4, 5};
    std::vector<double> s(kept.size());
    if (t % 2 == 0) {
      for (double& v : s) v = u(rng);
    } else {
      // Closed-form solution with negative entries clipped to zero.
      s = solve_pruning_scales(build_pruning_system(b, 3, kept), 0.01, 0.0);
      for (double& v : s) v = std::max(v, 0.0);
    }
    const ErrorTerms e = pruning_error_terms(normalized, 3, kept, s);
    violations += relu_bound_check(e.a, e.e_p).violations;
    elements += e.a.size();
  }
  report(5, "ReLU bound", violations == 0,
         std::to_string(violations) + " violations over " + std::to_string(elements) + " elements");
}

struct FixtureSpec {
  const char* topology;
  Shape input;
};

const std::vector<FixtureSpec>& fixtures() {
  static const std::vector<FixtureSpec> f{
      {"c16-c16-c16", {3, 12, 12}},
      {"c16-c24-mp-c32", {3, 16, 16}},
      {"c24-c24-mp-c32-c32", {3, 16, 16}},
      {"c16-c32-c32-gap-fc10", {3, 12, 12}},
      {"c32-c24-mp-c24-c16", {3, 16, 16}},
  };
  return f;
}

void criterion6() {
  const auto start = Clock::now();
  CompressionConfig cfg;
  cfg.prune_ratio = 0.3;
  cfg.wbits = 6;
  const auto& fx = fixtures();
  const int per_net = kDirectionalTrials / static_cast<int>(fx.size());
  int wins_prune = 0, wins_one = 0, trials = 0;
  double sum_ours = 0.0, sum_prune = 0.0, sum_one = 0.0;
  for (std::size_t f = 0; f < fx.size(); ++f) {
    const Network net = random_network(fx[f].topology, fx[f].input, 600 + f);
    const CompressionResult ours = compress(net, cfg);
    const auto plan = ours.report.plan();
    const Network prune = baseline_prune_only(net, plan, cfg.wbits);
    const Network one = baseline_one_to_one(net, plan, cfg.alpha1, cfg.wbits);
    const std::size_t tap = net.conv_count() - 1;
    for (int t = 0; t < per_net; ++t) {
      const Tensor x = random_inputs(net, 4, 6000 + 100 * f + t);
      const double m_ours = feature_mse(net, ours.network, tap, x);
      const double m_prune = feature_mse(net, prune, tap, x);
      const double m_one = feature_mse(net, one, tap, x);
      wins_prune += m_ours < m_prune;
      wins_one += m_ours <= m_one;
      sum_ours += m_ours;
      sum_prune += m_prune;
      sum_one += m_one;
      ++trials;
    }
  }
  const double secs = seconds_since(start);
  const double rp = double(wins_prune) / trials, ro = double(wins_one) / trials;
  report(6, "directional result", rp >= kPruneOnlyWinRate && ro >= kOneToOneWinRate && secs < kDirectionalSeconds,
         "UDFC < prune-only in " + std::to_string(wins_prune) + "/" + std::to_string(trials) +
             ", <= one-to-one in " + std::to_string(wins_one) + "/" + std::to_string(trials) + "; mean MSE " +
             fmt("%.4g", sum_ours / trials) + " vs " + fmt("%.4g", sum_prune / trials) + " vs " +
             fmt("%.4g", sum_one / trials) + ", " + fmt("%.2f s", secs));
}

void criterion7() {
  std::mt19937_64 rng(707);
  const std::size_t per_channel = 1000;
  bool bound_exact = true, bound_float = true, idempotent = true;
  double worst_ratio = 0.0;
  for (int k = kMinQuantBits; k <= kMaxQuantBits; ++k) {
    const double levels = std::ldexp(1.0, k) - 1.0;
    for (std::size_t c = 0; c < kQuantWeights / per_channel; ++c) {
      const Tensor w = random_tensor({1, per_channel}, rng, std::uniform_real_distribution<float>(0.01f, 3.0f)(rng));
      const auto src = w.slice0(0);
      const QuantizedChannel q = quantize_channel(src, k);
      const double bound = double(q.scale) / levels;
      for (std::size_t i = 0; i < per_channel; ++i) {
        const double exact = std::abs(double(src[i]) - dequantize_code(q.codes[i], k, q.scale));
        const double stored = std::abs(double(src[i]) - double(q.dequant[i]));
        if (exact > bound) bound_exact = false;
        if (stored > bound + double(q.scale) * std::ldexp(1.0, -24)) bound_float = false;
        worst_ratio = std::max(worst_ratio, exact / bound);
      }
      const QuantizedChannel again = quantize_channel(q.dequant, k);
      if (again.codes != q.codes || again.dequant != q.dequant) idempotent = false;
    }
  }
  report(7, "quantizer bound", bound_exact && bound_float && idempotent,
         "10^6 weights per k in 2..8, worst |W - W~| / bound " + fmt("%.6f", worst_ratio) +
             ", idempotent: " + (idempotent ? "yes" : "no"));
}

void criterion8() {
  constexpr std::uint64_t kResNet18Params = 11689512;
  const double full = to_mebibytes(weight_bytes(kResNet18Params, 32));
  const double six = to_mebibytes(weight_bytes(kResNet18Params, 6));
  const double ratio = weight_bytes(kResNet18Params, 6) / weight_bytes(kResNet18Params, 32);
  const bool pass = std::round(full * 100.0) == 4459.0 && std::round(six * 100.0) == 836.0 && ratio == 6.0 / 32.0;
  report(8, "size accounting", pass,
         fmt("%.2f MB", full) + " -> " + fmt("%.2f MB", six) + ", ratio " + fmt("%.6f", ratio));
}

void criterion9() {
  const Network net = random_network("c64-c64-mp-c128-c128-mp-c256-gap-fc10", {3, 32, 32}, 909);
  const std::size_t params = static_cast<std::size_t>(model_size_bytes(net, 32) / 4.0);
  CompressionConfig cfg;
  cfg.prune_ratio = 0.3;
  cfg.wbits = 6;
  set_thread_limit(1);
  const auto start = Clock::now();
  const CompressionResult r = compress(net, cfg);
  const double secs = seconds_since(start);
  set_thread_limit(0);
  report(9, "throughput", params <= kThroughputMaxParams && secs < kThroughputSeconds,
         std::to_string(params) + " parameters compressed in " + fmt("%.3f s", secs) + " on one thread (" +
             std::to_string(r.report.flops_before) + " -> " + std::to_string(r.report.flops_after) + " MACs)");
}

void criterion10() {
  const std::vector<double> ratios{0.1, 0.2, 0.3, 0.4, 0.5};
  const auto& fx = fixtures();
  bool monotone = true;
  std::string detail;
  for (int wbits : {32, 6}) {
    std::vector<double> mean(ratios.size(), 0.0);
    for (std::size_t f = 0; f < fx.size(); ++f) {
      const Network net = random_network(fx[f].topology, fx[f].input, 1000 + f);
      CompressionConfig base;
      const std::vector<int> bits{wbits};
      const auto cells = sweep(net, base, ratios, bits, SweepProbe{net.conv_count() - 1, 8, 77 + f});
      for (std::size_t i = 0; i < ratios.size(); ++i) mean[i] += *cells[i].feature_mse / double(fx.size());
    }
    detail += "W" + std::to_string(wbits) + " MSE";
    for (std::size_t i = 0; i < ratios.size(); ++i) {
      detail += " " + fmt("%.4g", mean[i]);
      if (i > 0 && mean[i] < mean[i - 1]) monotone = false;
    }
    detail += "; ";
  }

  const std::vector<double> alphas{0.0, 0.001, 0.01, 0.1};
  int interior = 0;
  std::string argmins;
  for (std::size_t f = 0; f < fx.size(); ++f) {
    const Network net = random_network(fx[f].topology, fx[f].input, 1000 + f);
    CompressionConfig base;
    base.prune_ratio = 0.3;
    base.wbits = 6;
    const auto cells = sweep_alpha1(net, base, alphas, SweepProbe{net.conv_count() - 1, 8, 77 + f});
    std::size_t best = 0;
    for (std::size_t i = 1; i < cells.size(); ++i)
      if (*cells[i].feature_mse < *cells[best].feature_mse) best = i;
    if (best != 0 && best + 1 != cells.size()) ++interior;
    argmins += (argmins.empty() ? "" : ",") + fmt("%g", alphas[best]);
  }
  detail += "alpha1 argmin per fixture {" + argmins + "}, interior on " + std::to_string(interior) +
            "/5 (soft: " + (interior >= 3 ? "met" : "not met, reported only") + ")";
  report(10, "sweep shape", monotone, detail);
}

}  // namespace

int main() {
  const std::vector<std::function<void()>> criteria{criterion1, criterion2, criterion3, criterion4, criterion5,
                                                    criterion6, criterion7, criterion8, criterion9, criterion10};
  for (const auto& c : criteria) {
    try {
      c();
    } catch (const std::exception& e) {
      std::printf("[FAIL] criterion threw: %s\n", e.what());
      ++failures;
    }
  }
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
