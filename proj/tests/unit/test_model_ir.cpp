#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"
#include "fixtures.hpp"
#include "oracles.hpp"
#include "udfc/error.hpp"
#include "udfc/forward.hpp"
#include "udfc/model_io.hpp"
#include "udfc/topology.hpp"

using namespace udfc;
namespace fs = std::filesystem;

namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected udfc::Error");
  return ErrorKind::Io;
}

Network vgg_tiny(std::uint64_t seed) {
  return random_network("c8-c8-mp-c16-gap-fc4", {3, 8, 8}, seed);
}

}  // namespace

TEST_CASE("tensor shape checks") {
  CHECK(Tensor({2, 3}).size() == 6);
  CHECK(kind_of([] { Tensor({2, 0}); }) == ErrorKind::ShapeMismatch);
  CHECK(kind_of([] { Tensor({1, 1, 1, 1, 1}); }) == ErrorKind::ShapeMismatch);
  CHECK(kind_of([] { Tensor({2, 2}, std::vector<float>(3)); }) == ErrorKind::ShapeMismatch);
  Tensor t({1, 2, 2, 2});
  t.at(0, 1, 1, 0) = 5.0f;
  CHECK(t[6] == 5.0f);
  CHECK(t.slice0(0).size() == 8);
}

TEST_CASE("validate rejects malformed networks") {
  Network empty;
  empty.input_shape = {1, 4, 4};
  CHECK(kind_of([&] { validate(empty); }) == ErrorKind::Validation);

  Network net = vgg_tiny(1);
  CHECK_NOTHROW(validate(net));

  Network bad_bn = net;
  bad_bn.block(0).bn->gamma.pop_back();
  CHECK(kind_of([&] { validate(bad_bn); }) == ErrorKind::ShapeMismatch);

  Network bad_var = net;
  bad_var.block(1).bn->var[0] = -1.0f;
  CHECK(kind_of([&] { validate(bad_var); }) == ErrorKind::Validation);

  Network nan = net;
  nan.block(0).conv.weight[3] = std::numeric_limits<float>::quiet_NaN();
  CHECK(kind_of([&] { validate(nan); }) == ErrorKind::NonFinite);

  Network chain = net;
  std::get<ConvBlock>(chain.layers[1]).conv.weight = Tensor({8, 7, 3, 3});
  CHECK(kind_of([&] { validate(chain); }) == ErrorKind::ShapeMismatch);

  Network head_order = net;
  std::swap(head_order.layers[4], head_order.layers[5]);
  CHECK_THROWS_AS(validate(head_order), Error);
}

TEST_CASE("shape inference through pools and head") {
  const Network net = vgg_tiny(2);
  const auto shapes = infer_shapes(net);
  REQUIRE(shapes.size() == 6);
  CHECK(shapes[0] == Shape{8, 8, 8});
  CHECK(shapes[2] == Shape{8, 4, 4});
  CHECK(shapes[3] == Shape{16, 4, 4});
  CHECK(shapes[4] == Shape{16});
  CHECK(shapes[5] == Shape{4});
}

TEST_CASE("save/load round trip is byte identical") {
  const Network net = vgg_tiny(3);
  const fs::path a = fixture::scratch_dir("rt-a"), b = fixture::scratch_dir("rt-b");
  save_model(net, a);
  const Network back = load_model(a);
  CHECK(back == net);
  save_model(back, b);
  CHECK(fixture::read_bytes(a / "model.json") == fixture::read_bytes(b / "model.json"));
  CHECK(fixture::read_bytes(a / "weights.bin") == fixture::read_bytes(b / "weights.bin"));
  // Loading through the manifest path works too.
  CHECK(load_model(a / "model.json") == net);
}

TEST_CASE("round trip keeps bias, identity activation, odd eps and wbits") {
  Network net = fixture::two_block_net(2, 4, 3, 5, 9);
  net.block(0).conv.bias = {0.1f, -0.2f, 0.3f, 0.0f};
  net.block(0).bn->eps = 1e-3 / 3.0;
  net.block(1).bn.reset();
  net.block(1).activation = Activation::Identity;
  net.block(1).wbits = 6;
  const fs::path dir = fixture::scratch_dir("rt-misc");
  save_model(net, dir);
  const Network back = load_model(dir);
  CHECK(back == net);
  CHECK(back.block(0).bn->eps == 1e-3 / 3.0);
}

TEST_CASE("save rejects a network without conv blocks before writing") {
  Network net;
  net.input_shape = {1, 2, 2};
  const fs::path dir = fixture::scratch_dir("no-blocks");
  CHECK(kind_of([&] { save_model(net, dir); }) == ErrorKind::Validation);
  CHECK_FALSE(fs::exists(dir / "model.json"));
}

TEST_CASE("hand-written manifest loads with element offsets") {
  const fs::path dir = fixture::scratch_dir("manual");
  write_text_file(dir / "model.json", R"({
    "version": "udfc-1", "input_shape": [1, 3, 3],
    "layers": [
      {"kind": "conv", "out_channels": 2, "in_channels": 1, "kernel": 1, "stride": 1, "pad": 0,
       "has_bn": true, "activation": "relu", "weight_offset": 0, "weight_len": 2,
       "bn_offsets": {"gamma": 2, "beta": 4, "mean": 6, "var": 8}, "bn_len": 2, "bn_eps": 0.0},
      {"kind": "conv", "out_channels": 1, "in_channels": 2, "kernel": 1, "stride": 1, "pad": 0,
       "has_bn": false, "activation": "identity", "weight_offset": 10, "weight_len": 2}
    ]})");
  const std::vector<float> blob{2, -1, 1, 1, 0, 0, 0, 0, 1, 1, 1, 1};
  write_f32_file(dir / "weights.bin", blob);
  const Network net = load_model(dir);
  REQUIRE(net.conv_count() == 2);
  CHECK(net.block(0).conv.weight[0] == 2.0f);
  CHECK(net.block(0).bn->eps == 0.0);
  CHECK_FALSE(net.block(1).bn.has_value());
  // x -> relu(2x) + relu(-x) = 2|x| for x >= 0 and |x| for x < 0.
  const Tensor in({1, 1, 3, 3}, std::vector<float>{-3, -2, -1, 0, 1, 2, 3, 4, 5});
  const Tensor out = forward(net, in).output;
  const std::vector<float> expect{3, 2, 1, 0, 2, 4, 6, 8, 10};
  CHECK(out.values() == expect);
}

TEST_CASE("load diagnostics are distinct") {
  const Network net = random_network("c16-c4", {3, 4, 4}, 5);
  const fs::path good = fixture::scratch_dir("diag-good");
  save_model(net, good);
  const std::string manifest = read_text_file(good / "model.json");
  const std::vector<float> blob = read_f32_file(good / "weights.bin");

  SUBCASE("missing weights") {
    const fs::path d = fixture::scratch_dir("diag-missing");
    write_text_file(d / "model.json", manifest);
    CHECK(kind_of([&] { load_model(d); }) == ErrorKind::MissingFile);
    CHECK(kind_of([&] { load_model(d / "nope"); }) == ErrorKind::MissingFile);
  }
  SUBCASE("16 declared channels over a 15-channel blob") {
    const fs::path d = fixture::scratch_dir("diag-short");
    write_text_file(d / "model.json", manifest);
    // Drop one output channel's worth of weights (3 * 3 * 3) from the first conv.
    std::vector<float> shorter(blob.begin() + 27, blob.end());
    write_f32_file(d / "weights.bin", shorter);
    CHECK(kind_of([&] { load_model(d); }) == ErrorKind::ShapeMismatch);
  }
  SUBCASE("declared length disagrees with shape") {
    const fs::path d = fixture::scratch_dir("diag-len");
    std::string m = manifest;
    m.replace(m.find("\"weight_len\": 432"), 17, "\"weight_len\": 405");
    write_text_file(d / "model.json", m);
    write_f32_file(d / "weights.bin", blob);
    CHECK(kind_of([&] { load_model(d); }) == ErrorKind::ShapeMismatch);
  }
  SUBCASE("non-finite weight") {
    const fs::path d = fixture::scratch_dir("diag-nan");
    write_text_file(d / "model.json", manifest);
    std::vector<float> bad = blob;
    bad[10] = std::numeric_limits<float>::infinity();
    write_f32_file(d / "weights.bin", bad);
    CHECK(kind_of([&] { load_model(d); }) == ErrorKind::NonFinite);
  }
  SUBCASE("unsupported kind") {
    const fs::path d = fixture::scratch_dir("diag-kind");
    std::string m = manifest;
    m.replace(m.find("\"kind\": \"conv\""), 14, "\"kind\": \"lstm\"");
    write_text_file(d / "model.json", m);
    write_f32_file(d / "weights.bin", blob);
    CHECK(kind_of([&] { load_model(d); }) == ErrorKind::UnsupportedLayer);
  }
  SUBCASE("broken json and wrong version") {
    const fs::path d = fixture::scratch_dir("diag-json");
    write_f32_file(d / "weights.bin", blob);
    write_text_file(d / "model.json", "{ not json");
    CHECK(kind_of([&] { load_model(d); }) == ErrorKind::Validation);
    std::string m = manifest;
    m.replace(m.find("udfc-1"), 6, "udfc-9");
    write_text_file(d / "model.json", m);
    CHECK(kind_of([&] { load_model(d); }) == ErrorKind::Validation);
  }
}

TEST_CASE("f32 and u32 blobs are little endian") {
  const fs::path d = fixture::scratch_dir("le");
  write_f32_file(d / "f.bin", std::vector<float>{1.0f});
  CHECK(fixture::read_bytes(d / "f.bin") == std::string("\x00\x00\x80\x3f", 4));
  write_u32_file(d / "u.bin", std::vector<std::uint32_t>{0x01020304u});
  CHECK(fixture::read_bytes(d / "u.bin") == std::string("\x04\x03\x02\x01", 4));
  CHECK(read_u32_file(d / "u.bin") == std::vector<std::uint32_t>{0x01020304u});
}

TEST_CASE("forward: scalar conv and identity batch norm") {
  Network net;
  net.input_shape = {1, 1, 1};
  ConvBlock b;
  b.conv.weight = Tensor({1, 1, 1, 1}, std::vector<float>{2.0f});
  b.activation = Activation::Identity;
  net.layers.emplace_back(b);
  CHECK(forward(net, Tensor({1, 1, 1, 1}, std::vector<float>{3.0f})).output[0] == 6.0f);

  std::mt19937_64 rng(4);
  const Tensor x = fixture::random_tensor({2, 3, 4, 5}, rng);
  CHECK(batch_norm(x, BatchNorm::identity(3, 0.0)) == x);
}

TEST_CASE("forward: 3x3 pad 1 against a hand-evaluated window") {
  std::vector<float> xs(16);
  for (int i = 0; i < 16; ++i) xs[i] = static_cast<float>(i + 1);
  const Tensor x({1, 1, 4, 4}, xs);
  Conv2d conv;
  conv.weight = Tensor({1, 1, 3, 3}, std::vector<float>{1, 0, -1, 2, 0, -2, 1, 0, -1});
  conv.pad = 1;
  const Tensor y = conv2d(x, conv);
  // Horizontal Sobel on the ramp 1..16, zero outside the image.
  std::vector<float> hand(16);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) {
      auto at = [&](int rr, int cc) { return (rr < 0 || cc < 0 || rr > 3 || cc > 3) ? 0.0f : xs[rr * 4 + cc]; };
      hand[r * 4 + c] = 1 * at(r - 1, c - 1) - 1 * at(r - 1, c + 1) + 2 * at(r, c - 1) - 2 * at(r, c + 1) +
                        1 * at(r + 1, c - 1) - 1 * at(r + 1, c + 1);
    }
  CHECK(y.values() == hand);
  CHECK(y[0] == -10.0f);  // 2*(0-2) + (0-6)
  CHECK(y[5] == -8.0f);   // (1-3) + 2*(5-7) + (9-11)
}

TEST_CASE("forward: strided conv matches the loop oracle") {
  std::mt19937_64 rng(11);
  const Tensor x = fixture::random_tensor({1, 3, 7, 6}, rng);
  Conv2d conv;
  conv.weight = fixture::random_tensor({4, 3, 3, 3}, rng);
  conv.stride = 2;
  conv.pad = 1;
  const Tensor y = conv2d(x, conv);
  std::size_t ho = 0, wo = 0;
  const auto ref = oracle::conv_ref(std::vector<double>(x.values().begin(), x.values().end()), 3, 7, 6,
                                    std::vector<double>(conv.weight.values().begin(), conv.weight.values().end()),
                                    4, 3, 2, 1, ho, wo);
  REQUIRE(y.shape() == Shape{1, 4, ho, wo});
  for (std::size_t i = 0; i < ref.size(); ++i) CHECK(y[i] == doctest::Approx(ref[i]).epsilon(1e-5));
}

TEST_CASE("forward: BN folding equivalence within 1e-5") {
  std::mt19937_64 rng(21);
  ConvBlock b = fixture::random_block(6, 3, 3, rng);
  b.activation = Activation::Identity;
  Conv2d folded = b.conv;
  folded.bias.assign(6, 0.0f);
  for (std::size_t o = 0; o < 6; ++o) {
    const double s = double(b.bn->gamma[o]) / std::sqrt(double(b.bn->var[o]) + b.bn->eps);
    for (float& w : folded.weight.slice0(o)) w = static_cast<float>(w * s);
    folded.bias[o] = static_cast<float>(b.bn->beta[o] - s * b.bn->mean[o]);
  }
  const Tensor x = fixture::random_tensor({2, 3, 6, 6}, rng);
  const Tensor ref = batch_norm(conv2d(x, b.conv), *b.bn);
  const Tensor fast = conv2d(x, folded);
  CHECK(oracle::max_abs_diff(ref.data(), fast.data()) <= 1e-5);
}

TEST_CASE("forward: taps satisfy X = ReLU(BN(Z)) and runs are deterministic") {
  const Network net = vgg_tiny(7);
  std::mt19937_64 rng(8);
  const Tensor x = fixture::random_tensor({3, 3, 8, 8}, rng);
  const std::vector<std::size_t> taps{0, 2};
  const ForwardResult r = forward(net, x, taps);
  REQUIRE(r.taps.size() == 2);
  CHECK_FALSE(r.taps.count(1));
  for (std::size_t t : taps) {
    const auto& m = r.taps.at(t);
    CHECK(m.post_act == apply_activation(batch_norm(m.pre_bn, *net.block(t).bn), Activation::ReLU));
  }
  CHECK(r.output.shape() == Shape{3, 4});
  CHECK(forward(net, x, taps).output == r.output);
  CHECK(kind_of([&] { forward(net, Tensor({1, 3, 8, 7})); }) == ErrorKind::ShapeMismatch);
}

TEST_CASE("forward reports non-finite intermediates") {
  Network net = fixture::two_block_net(1, 2, 2, 3, 1);
  net.block(0).conv.weight[0] = 3e38f;
  const Tensor x({1, 1, 3, 3}, 1e10f);
  CHECK(kind_of([&] { forward(net, x); }) == ErrorKind::NonFinite);
}

TEST_CASE("max pool and global average pool") {
  const Tensor x({1, 1, 2, 4}, std::vector<float>{1, 5, 2, 0, 3, 4, -1, -7});
  CHECK(max_pool2x2(x).values() == std::vector<float>{5, 2});
  CHECK(global_avg_pool(x).values() == std::vector<float>{7.0f / 8.0f});
}
