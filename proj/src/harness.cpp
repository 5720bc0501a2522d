#include "udfc/harness.hpp"

#include <algorithm>
#include <random>
#include <string>

#include "json.hpp"
#include "udfc/error.hpp"
#include "udfc/forward.hpp"
#include "udfc/model_io.hpp"
#include "udfc/pipeline.hpp"

namespace udfc {

namespace fs = std::filesystem;

Tensor random_inputs(const Network& net, std::size_t batch, std::uint64_t seed) {
  if (batch == 0) throw Error(ErrorKind::InvalidArgument, "batch must be >= 1");
  Shape shape{batch};
  shape.insert(shape.end(), net.input_shape.begin(), net.input_shape.end());
  Tensor t(shape);
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  for (float& v : t.data()) v = normal(rng);
  return t;
}

namespace {

double mse(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw Error(ErrorKind::ShapeMismatch, "tapped maps differ: " + shape_to_string(a.shape()) + " vs " +
                                              shape_to_string(b.shape()));
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = double(a[i]) - double(b[i]);
    s += d * d;
  }
  return s / static_cast<double>(a.size());
}

const Tensor& pick(const BlockMaps& maps, TapPoint point) {
  return point == TapPoint::PreActivation ? maps.pre_bn : maps.post_act;
}

}  // namespace

double feature_mse(const Network& a, const Network& b, std::size_t tap, const Tensor& inputs, TapPoint point) {
  const std::size_t taps[] = {tap};
  const ForwardResult ra = forward(a, inputs, taps);
  const ForwardResult rb = forward(b, inputs, taps);
  if (!ra.taps.contains(tap) || !rb.taps.contains(tap))
    throw Error(ErrorKind::IndexOutOfRange, "tap block " + std::to_string(tap));
  return mse(pick(ra.taps.at(tap), point), pick(rb.taps.at(tap), point));
}

Network baseline_prune_only(const Network& net, std::span<const PruneDecision> plan, int wbits) {
  CompressionConfig cfg;
  cfg.wbits = wbits;
  return compress(net, cfg, Compensation::None, plan).network;
}

Network baseline_one_to_one(const Network& net, std::span<const PruneDecision> plan, double alpha1, int wbits) {
  CompressionConfig cfg;
  cfg.alpha1 = alpha1;
  cfg.wbits = wbits;
  return compress(net, cfg, Compensation::OneToOne, plan).network;
}

Dataset load_dataset(const fs::path& dir) {
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(read_text_file(dir / "data.json"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Validation, (dir / "data.json").string() + ": " + e.what());
  }
  Dataset ds;
  std::size_t count = 0;
  try {
    count = meta.at("count").get<std::size_t>();
    ds.sample_shape = meta.at("shape").get<Shape>();
    ds.class_count = meta.at("class_count").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Validation, (dir / "data.json").string() + ": " + e.what());
  }
  if (ds.sample_shape.size() != 3 || shape_numel(ds.sample_shape) == 0)
    throw Error(ErrorKind::ShapeMismatch, "dataset shape must be CHW, got " + shape_to_string(ds.sample_shape));
  std::vector<float> data = read_f32_file(dir / "data.bin");
  ds.labels = read_u32_file(dir / "labels.bin");
  if (ds.labels.size() != count)
    throw Error(ErrorKind::ShapeMismatch, "labels.bin holds " + std::to_string(ds.labels.size()) +
                                              " labels, data.json declares " + std::to_string(count));
  if (data.size() != count * shape_numel(ds.sample_shape))
    throw Error(ErrorKind::ShapeMismatch, "data.bin holds " + std::to_string(data.size()) + " values, expected " +
                                              std::to_string(count * shape_numel(ds.sample_shape)));
  for (std::uint32_t label : ds.labels)
    if (label >= ds.class_count)
      throw Error(ErrorKind::Validation, "label " + std::to_string(label) + " outside [0, " +
                                             std::to_string(ds.class_count) + ")");
  if (count > 0) {
    Shape shape{count};
    shape.insert(shape.end(), ds.sample_shape.begin(), ds.sample_shape.end());
    ds.data = Tensor(shape, std::move(data));
    if (!ds.data.all_finite()) throw Error(ErrorKind::NonFinite, "data.bin");
  }
  return ds;
}

void save_dataset(const Dataset& ds, const fs::path& dir) {
  if (ds.count() > 0 && (ds.data.rank() != 4 || ds.data.dim(0) != ds.count()))
    throw Error(ErrorKind::ShapeMismatch, "dataset tensor does not hold one sample per label");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create " + dir.string());
  nlohmann::ordered_json meta;
  meta["count"] = ds.count();
  meta["shape"] = ds.sample_shape;
  meta["class_count"] = ds.class_count;
  write_text_file(dir / "data.json", meta.dump(2) + "\n");
  write_f32_file(dir / "data.bin", ds.data.data());
  write_u32_file(dir / "labels.bin", ds.labels);
}

double top1_accuracy(const Network& net, const Dataset& ds, std::size_t batch) {
  if (ds.count() == 0) throw Error(ErrorKind::InvalidArgument, "empty dataset");
  if (ds.sample_shape != net.input_shape)
    throw Error(ErrorKind::ShapeMismatch, "dataset samples are " + shape_to_string(ds.sample_shape) +
                                              ", network expects " + shape_to_string(net.input_shape));
  const std::size_t per_sample = shape_numel(ds.sample_shape);
  std::size_t correct = 0;
  for (std::size_t start = 0; start < ds.count(); start += batch) {
    const std::size_t n = std::min(batch, ds.count() - start);
    Shape shape{n};
    shape.insert(shape.end(), ds.sample_shape.begin(), ds.sample_shape.end());
    const auto first = ds.data.values().begin() + static_cast<std::ptrdiff_t>(start * per_sample);
    const Tensor input(shape, std::vector<float>(first, first + static_cast<std::ptrdiff_t>(n * per_sample)));
    const Tensor logits = forward(net, input).output;
    if (logits.rank() != 2 || logits.dim(1) != ds.class_count)
      throw Error(ErrorKind::ShapeMismatch, "network emits " + shape_to_string(logits.shape()) + " for " +
                                                std::to_string(ds.class_count) + " classes");
    const std::size_t classes = logits.dim(1);
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = logits.data().subspan(i * classes, classes);
      const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
      if (best == ds.labels[start + i]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(ds.count());
}

EvalResult evaluate_accuracy(const Network& net, const Dataset& dataset) {
  EvalResult r;
  r.top1 = top1_accuracy(net, dataset);
  return r;
}

EvalResult evaluate(const Network& net, const Network* baseline, const Dataset* dataset, std::size_t trials,
                    std::uint64_t seed, std::size_t batch) {
  EvalResult r;
  r.trials = trials;
  r.seed = seed;
  if (dataset) r.top1 = top1_accuracy(net, *dataset);
  if (!baseline || trials == 0) return r;
  if (baseline->input_shape != net.input_shape)
    throw Error(ErrorKind::ShapeMismatch, "baseline input shape differs");

  const std::size_t blocks = std::min(net.conv_count(), baseline->conv_count());
  std::vector<std::size_t> taps(blocks);
  for (std::size_t l = 0; l < blocks; ++l) taps[l] = l;
  std::vector<double> pre(blocks, 0.0), post(blocks, 0.0);
  std::vector<bool> comparable(blocks, true);
  std::mt19937_64 seeds(seed);
  for (std::size_t t = 0; t < trials; ++t) {
    const Tensor inputs = random_inputs(net, batch, seeds());
    const ForwardResult a = forward(net, inputs, taps);
    const ForwardResult b = forward(*baseline, inputs, taps);
    for (std::size_t l = 0; l < blocks; ++l) {
      if (a.taps.at(l).pre_bn.shape() != b.taps.at(l).pre_bn.shape()) {
        comparable[l] = false;
        continue;
      }
      pre[l] += mse(a.taps.at(l).pre_bn, b.taps.at(l).pre_bn);
      post[l] += mse(a.taps.at(l).post_act, b.taps.at(l).post_act);
    }
  }
  for (std::size_t l = 0; l < blocks; ++l) {
    if (comparable[l]) {
      r.feature_mse.emplace_back(pre[l] / static_cast<double>(trials));
      r.post_act_mse.emplace_back(post[l] / static_cast<double>(trials));
    } else {
      r.feature_mse.emplace_back(std::nullopt);
      r.post_act_mse.emplace_back(std::nullopt);
    }
  }
  return r;
}

}  // namespace udfc
