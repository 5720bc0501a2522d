#include "udfc/model_io.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"
#include "udfc/error.hpp"

namespace udfc {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::string read_text_file(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorKind::MissingFile, path.string());
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorKind::Io, "short write to " + path.string());
}

namespace {

std::vector<std::uint32_t> read_words(const fs::path& path) {
  const std::string bytes = read_text_file(path);
  if (bytes.size() % 4 != 0)
    throw Error(ErrorKind::ShapeMismatch, path.string() + " length is not a multiple of 4 bytes");
  std::vector<std::uint32_t> words(bytes.size() / 4);
  for (std::size_t i = 0; i < words.size(); ++i) {
    const auto* b = reinterpret_cast<const unsigned char*>(bytes.data() + 4 * i);
    words[i] = std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 | std::uint32_t(b[3]) << 24;
  }
  return words;
}

void write_words(const fs::path& path, std::span<const std::uint32_t> words) {
  std::string bytes(words.size() * 4, '\0');
  for (std::size_t i = 0; i < words.size(); ++i)
    for (int k = 0; k < 4; ++k) bytes[4 * i + k] = static_cast<char>((words[i] >> (8 * k)) & 0xFF);
  write_text_file(path, bytes);
}

}  // namespace

std::vector<float> read_f32_file(const fs::path& path) {
  const auto words = read_words(path);
  std::vector<float> out(words.size());
  for (std::size_t i = 0; i < words.size(); ++i) out[i] = std::bit_cast<float>(words[i]);
  return out;
}

void write_f32_file(const fs::path& path, std::span<const float> values) {
  std::vector<std::uint32_t> words(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) words[i] = std::bit_cast<std::uint32_t>(values[i]);
  write_words(path, words);
}

std::vector<std::uint32_t> read_u32_file(const fs::path& path) { return read_words(path); }

void write_u32_file(const fs::path& path, std::span<const std::uint32_t> values) { write_words(path, values); }

namespace {

class BlobWriter {
 public:
  std::size_t append(std::span<const float> values) {
    const std::size_t offset = blob_.size();
    blob_.insert(blob_.end(), values.begin(), values.end());
    return offset;
  }
  const std::vector<float>& blob() const { return blob_; }

 private:
  std::vector<float> blob_;
};

class BlobReader {
 public:
  explicit BlobReader(std::vector<float> blob) : blob_(std::move(blob)) {}

  std::vector<float> take(const json& rec, const char* offset_key, const char* len_key, std::size_t expected,
                          const std::string& where) {
    const std::size_t offset = rec.at(offset_key).get<std::size_t>();
    const std::size_t len = rec.at(len_key).get<std::size_t>();
    if (len != expected)
      throw Error(ErrorKind::ShapeMismatch, where + ": " + len_key + " is " + std::to_string(len) +
                                                " but the declared shape needs " + std::to_string(expected));
    if (offset > blob_.size() || len > blob_.size() - offset)
      throw Error(ErrorKind::ShapeMismatch, where + ": range [" + std::to_string(offset) + ", " +
                                                std::to_string(offset + len) + ") exceeds weights.bin (" +
                                                std::to_string(blob_.size()) + " values)");
    used_ += len;
    std::vector<float> out(blob_.begin() + static_cast<std::ptrdiff_t>(offset),
                           blob_.begin() + static_cast<std::ptrdiff_t>(offset + len));
    for (float v : out)
      if (!std::isfinite(v)) throw Error(ErrorKind::NonFinite, where + ": " + offset_key + " data");
    return out;
  }

  void expect_fully_used() const {
    if (used_ != blob_.size())
      throw Error(ErrorKind::ShapeMismatch, "manifest references " + std::to_string(used_) +
                                                " values but weights.bin holds " + std::to_string(blob_.size()));
  }

 private:
  std::vector<float> blob_;
  std::size_t used_ = 0;
};

const char* activation_name(Activation a) { return a == Activation::ReLU ? "relu" : "identity"; }

Activation parse_activation(const std::string& s, const std::string& where) {
  if (s == "relu") return Activation::ReLU;
  if (s == "identity") return Activation::Identity;
  throw Error(ErrorKind::UnsupportedLayer, where + ": activation '" + s + "'");
}

json conv_record(const ConvBlock& b, BlobWriter& blob) {
  const Conv2d& c = b.conv;
  json rec;
  rec["kind"] = "conv";
  rec["out_channels"] = c.out_channels();
  rec["in_channels"] = c.in_channels();
  rec["kernel"] = c.kernel();
  rec["stride"] = c.stride;
  rec["pad"] = c.pad;
  rec["has_bn"] = b.bn.has_value();
  rec["activation"] = activation_name(b.activation);
  rec["wbits"] = b.wbits;
  rec["weight_offset"] = blob.append(c.weight.data());
  rec["weight_len"] = c.weight.size();
  rec["has_bias"] = !c.bias.empty();
  if (!c.bias.empty()) {
    rec["bias_offset"] = blob.append(c.bias);
    rec["bias_len"] = c.bias.size();
  }
  if (b.bn) {
    json bn;
    bn["gamma"] = blob.append(b.bn->gamma);
    bn["beta"] = blob.append(b.bn->beta);
    bn["mean"] = blob.append(b.bn->mean);
    bn["var"] = blob.append(b.bn->var);
    rec["bn_offsets"] = bn;
    rec["bn_len"] = b.bn->channels();
    rec["bn_eps"] = b.bn->eps;
  }
  return rec;
}

json linear_record(const Linear& fc, BlobWriter& blob) {
  json rec;
  rec["kind"] = "linear";
  rec["out_features"] = fc.out_features();
  rec["in_features"] = fc.in_features();
  rec["wbits"] = fc.wbits;
  rec["weight_offset"] = blob.append(fc.weight.data());
  rec["weight_len"] = fc.weight.size();
  rec["has_bias"] = !fc.bias.empty();
  if (!fc.bias.empty()) {
    rec["bias_offset"] = blob.append(fc.bias);
    rec["bias_len"] = fc.bias.size();
  }
  return rec;
}

ConvBlock parse_conv(const json& rec, BlobReader& blob, const std::string& where) {
  const auto out_c = rec.at("out_channels").get<std::size_t>();
  const auto in_c = rec.at("in_channels").get<std::size_t>();
  const auto k = rec.at("kernel").get<std::size_t>();
  if (out_c == 0 || in_c == 0 || k == 0) throw Error(ErrorKind::ShapeMismatch, where + ": zero-sized conv");
  ConvBlock b;
  b.conv.stride = rec.at("stride").get<std::size_t>();
  b.conv.pad = rec.at("pad").get<std::size_t>();
  b.activation = parse_activation(rec.at("activation").get<std::string>(), where);
  b.wbits = rec.value("wbits", 32);
  b.conv.weight = Tensor({out_c, in_c, k, k}, blob.take(rec, "weight_offset", "weight_len", out_c * in_c * k * k, where));
  if (rec.value("has_bias", false)) b.conv.bias = blob.take(rec, "bias_offset", "bias_len", out_c, where);
  if (rec.at("has_bn").get<bool>()) {
    const json& off = rec.at("bn_offsets");
    const std::size_t n = rec.value("bn_len", out_c);
    if (n != out_c)
      throw Error(ErrorKind::ShapeMismatch, where + ": batch norm declares " + std::to_string(n) +
                                                " channels, conv has " + std::to_string(out_c));
    auto field = [&](const char* name) {
      json r{{"offset", off.at(name)}, {"len", n}};
      return blob.take(r, "offset", "len", out_c, where + " bn." + name);
    };
    BatchNorm bn;
    bn.gamma = field("gamma");
    bn.beta = field("beta");
    bn.mean = field("mean");
    bn.var = field("var");
    bn.eps = rec.at("bn_eps").get<double>();
    b.bn = std::move(bn);
  }
  return b;
}

Linear parse_linear(const json& rec, BlobReader& blob, const std::string& where) {
  const auto out_f = rec.at("out_features").get<std::size_t>();
  const auto in_f = rec.at("in_features").get<std::size_t>();
  if (out_f == 0 || in_f == 0) throw Error(ErrorKind::ShapeMismatch, where + ": zero-sized linear");
  Linear fc;
  fc.wbits = rec.value("wbits", 32);
  fc.weight = Tensor({out_f, in_f}, blob.take(rec, "weight_offset", "weight_len", out_f * in_f, where));
  if (rec.value("has_bias", false)) fc.bias = blob.take(rec, "bias_offset", "bias_len", out_f, where);
  return fc;
}

}  // namespace

Network load_model(const fs::path& path) {
  const fs::path manifest = fs::is_directory(path) ? path / kManifestName : path;
  const fs::path weights = manifest.parent_path() / kWeightsName;
  if (!fs::exists(manifest)) throw Error(ErrorKind::MissingFile, manifest.string());
  if (!fs::exists(weights)) throw Error(ErrorKind::MissingFile, weights.string());

  json doc;
  try {
    doc = json::parse(read_text_file(manifest));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Validation, manifest.string() + ": " + e.what());
  }
  Network net;
  try {
    if (doc.at("version").get<std::string>() != kFormatVersion)
      throw Error(ErrorKind::Validation, "unsupported manifest version " + doc.at("version").dump());
    net.input_shape = doc.at("input_shape").get<Shape>();
    BlobReader blob(read_f32_file(weights));
    const json& layers = doc.at("layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const json& rec = layers[i];
      const std::string where = "layer " + std::to_string(i);
      const std::string kind = rec.at("kind").get<std::string>();
      if (kind == "conv") {
        net.layers.emplace_back(parse_conv(rec, blob, where));
      } else if (kind == "maxpool") {
        net.layers.emplace_back(MaxPool2x2{});
      } else if (kind == "gap") {
        net.layers.emplace_back(GlobalAvgPool{});
      } else if (kind == "linear") {
        net.layers.emplace_back(parse_linear(rec, blob, where));
      } else {
        throw Error(ErrorKind::UnsupportedLayer, where + ": kind '" + kind + "'");
      }
    }
    blob.expect_fully_used();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Validation, manifest.string() + ": " + e.what());
  }
  validate(net);
  return net;
}

void save_model(const Network& net, const fs::path& dir) {
  validate(net);
  BlobWriter blob;
  json doc;
  doc["version"] = kFormatVersion;
  doc["input_shape"] = net.input_shape;
  json layers = json::array();
  for (const Layer& layer : net.layers) {
    if (const auto* b = std::get_if<ConvBlock>(&layer)) {
      layers.push_back(conv_record(*b, blob));
    } else if (std::holds_alternative<MaxPool2x2>(layer)) {
      layers.push_back(json{{"kind", "maxpool"}});
    } else if (std::holds_alternative<GlobalAvgPool>(layer)) {
      layers.push_back(json{{"kind", "gap"}});
    } else {
      layers.push_back(linear_record(std::get<Linear>(layer), blob));
    }
  }
  doc["layers"] = std::move(layers);

  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());
  write_text_file(dir / kManifestName, doc.dump(2) + "\n");
  write_f32_file(dir / kWeightsName, blob.blob());
}

}  // namespace udfc
