// udfc command-line entry point: compress, eval, gen-random.
//
// Exit codes: 0 ok, 2 usage, 3 validation, 4 I/O.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "udfc/error.hpp"
#include "udfc/forward.hpp"
#include "udfc/harness.hpp"
#include "udfc/model_io.hpp"
#include "udfc/pipeline.hpp"
#include "udfc/quantizer.hpp"
#include "udfc/report.hpp"
#include "udfc/topology.hpp"

namespace fs = std::filesystem;
using namespace udfc;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitValidation = 3;
constexpr int kExitIo = 4;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return kExitUsage;
    case ErrorKind::MissingFile:
    case ErrorKind::Io: return kExitIo;
    default: return kExitValidation;
  }
}

struct CompressArgs {
  std::string model, out, criterion = "l1";
  double prune_ratio = 0.0, alpha1 = 0.01, alpha2 = 0.008;
  int wbits = 32;
  std::optional<double> ridge;
  std::uint64_t seed = 0;
  std::vector<std::size_t> skip;
};

struct EvalArgs {
  std::string model, baseline, data, out;
  std::size_t trials = 10, batch = 4;
  std::uint64_t seed = 0;
  bool append = false;
};

struct GenArgs {
  std::string spec, out, input = "3x32x32";
  std::uint64_t seed = 0;
};

Shape parse_input_shape(const std::string& s) {
  static const std::regex re(R"((\d+)x(\d+)x(\d+))");
  std::smatch m;
  if (!std::regex_match(s, m, re)) throw Error(ErrorKind::InvalidArgument, "--input must look like 3x32x32");
  Shape shape{std::stoul(m[1]), std::stoul(m[2]), std::stoul(m[3])};
  for (std::size_t d : shape)
    if (d == 0) throw Error(ErrorKind::InvalidArgument, "--input extents must be positive");
  return shape;
}

int run_compress(const CompressArgs& a) {
  CompressionConfig cfg;
  cfg.prune_ratio = a.prune_ratio;
  cfg.criterion = parse_criterion(a.criterion);
  cfg.wbits = a.wbits;
  cfg.alpha1 = a.alpha1;
  cfg.alpha2 = a.alpha2;
  cfg.ridge = a.ridge;
  cfg.seed = a.seed;
  cfg.skip_layers = a.skip;
  cfg.validate();

  const Network net = load_model(a.model);
  const CompressionResult r = compress(net, cfg);
  save_model(r.network, a.out);
  write_report_files(r.report, a.out);
  if (cfg.wbits < 32) write_codes_file(fs::path(a.out) / "codes.bin", r.network);
  for (const auto& w : r.report.warnings) std::cerr << "warning: " << w << "\n";
  std::printf("compressed %zu conv blocks: %.0f -> %.0f bytes, %llu -> %llu MACs\n", r.report.layers.size(),
              r.report.size_before, r.report.size_after, static_cast<unsigned long long>(r.report.flops_before),
              static_cast<unsigned long long>(r.report.flops_after));
  return kExitOk;
}

int run_eval(const EvalArgs& a) {
  const Network net = load_model(a.model);
  std::optional<Network> baseline;
  std::optional<Dataset> data;
  if (!a.baseline.empty()) baseline = load_model(a.baseline);
  if (!a.data.empty()) data = load_dataset(a.data);
  const EvalResult r = evaluate(net, baseline ? &*baseline : nullptr, data ? &*data : nullptr,
                                baseline ? a.trials : 0, a.seed, a.batch);
  const std::string text = eval_json(r);
  std::cout << text;
  if (!a.out.empty()) write_text_file(a.out, text);
  if (a.append) {
    const fs::path dir = fs::is_directory(a.model) ? fs::path(a.model) : fs::path(a.model).parent_path();
    append_eval_to_report(dir / "report.json", r);
  }
  return kExitOk;
}

int run_gen(const GenArgs& a) {
  const Network net = random_network(a.spec, parse_input_shape(a.input), a.seed);
  // Self-check: the generated network must run on its declared input.
  Shape probe{1};
  probe.insert(probe.end(), net.input_shape.begin(), net.input_shape.end());
  forward(net, Tensor(probe, 0.0f));
  save_model(net, a.out);
  std::printf("wrote %zu layers (%zu conv blocks) to %s\n", net.layers.size(), net.conv_count(), a.out.c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Data-free joint channel pruning and weight quantization"};
  app.require_subcommand(1);

  CompressArgs ca;
  CLI::App* compress_cmd = app.add_subcommand("compress", "Prune and quantize a model");
  compress_cmd->add_option("--model", ca.model, "Model directory or model.json")->required();
  compress_cmd->add_option("--out", ca.out, "Output directory")->required();
  compress_cmd->add_option("--prune-ratio", ca.prune_ratio, "Per-layer prune ratio in [0, 1)");
  compress_cmd->add_option("--criterion", ca.criterion, "Channel importance: l1 or l2");
  compress_cmd->add_option("--wbits", ca.wbits, "Weight bit-width, 2..8, or 32 for none");
  compress_cmd->add_option("--alpha1", ca.alpha1, "Offset weight of the pruning loss");
  compress_cmd->add_option("--alpha2", ca.alpha2, "Offset weight of the quantization loss");
  compress_cmd->add_option("--ridge", ca.ridge, "Absolute ridge (default: 1e-8 * trace / |kept|)");
  compress_cmd->add_option("--seed", ca.seed, "Recorded in the report");
  compress_cmd->add_option("--skip-layers", ca.skip, "Conv block indices to leave untouched")->delimiter(',');

  EvalArgs ea;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Feature-map error and accuracy");
  eval_cmd->add_option("--model", ea.model, "Model to evaluate")->required();
  eval_cmd->add_option("--baseline", ea.baseline, "Reference model for feature-map MSE");
  eval_cmd->add_option("--data", ea.data, "Dataset directory (data.json, data.bin, labels.bin)");
  eval_cmd->add_option("--trials", ea.trials, "Random input batches for the MSE");
  eval_cmd->add_option("--batch", ea.batch, "Samples per random batch");
  eval_cmd->add_option("--seed", ea.seed, "Seed for the random inputs");
  eval_cmd->add_option("--out", ea.out, "Also write the result JSON here");
  eval_cmd->add_flag("--append-report", ea.append, "Append the result to the model's report.json");

  GenArgs ga;
  CLI::App* gen_cmd = app.add_subcommand("gen-random", "Write a random-weight fixture network");
  gen_cmd->add_option("--spec", ga.spec, "Topology such as c16-c32-mp-c64-gap-fc10")->required();
  gen_cmd->add_option("--seed", ga.seed, "Random seed");
  gen_cmd->add_option("--out", ga.out, "Output directory")->required();
  gen_cmd->add_option("--input", ga.input, "Input shape CxHxW");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  CLI::App* active = compress_cmd->parsed() ? compress_cmd : eval_cmd->parsed() ? eval_cmd : gen_cmd;
  try {
    if (active == compress_cmd) return run_compress(ca);
    if (active == eval_cmd) return run_eval(ea);
    return run_gen(ga);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    if (e.kind() == ErrorKind::InvalidArgument) std::cerr << active->help();
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
}
