#include "udfc/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>

#include "udfc/error.hpp"

namespace udfc {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::MissingFile: return "missing file";
    case ErrorKind::Io: return "i/o error";
    case ErrorKind::ShapeMismatch: return "shape mismatch";
    case ErrorKind::NonFinite: return "non-finite value";
    case ErrorKind::UnsupportedLayer: return "unsupported layer";
    case ErrorKind::Validation: return "validation error";
    case ErrorKind::InvalidArgument: return "invalid argument";
    case ErrorKind::IndexOutOfRange: return "index out of range";
    case ErrorKind::DeadChannel: return "dead channel";
    case ErrorKind::Singular: return "singular system";
  }
  return "error";
}

std::size_t shape_numel(const Shape& shape) noexcept {
  if (shape.empty()) return 0;
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

namespace {

void check_shape(const Shape& shape) {
  if (shape.empty() || shape.size() > 4)
    throw Error(ErrorKind::ShapeMismatch, "tensor rank must be 1..4, got " + shape_to_string(shape));
  for (std::size_t d : shape)
    if (d == 0) throw Error(ErrorKind::ShapeMismatch, "zero dimension in " + shape_to_string(shape));
}

}  // namespace

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
  check_shape(shape_);
  if (data_.size() != shape_numel(shape_))
    throw Error(ErrorKind::ShapeMismatch, "data length " + std::to_string(data_.size()) +
                                              " does not match shape " + shape_to_string(shape_));
}

std::size_t Tensor::offset4(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
  return ((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w;
}

float& Tensor::at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
  return data_[offset4(n, c, h, w)];
}

const float& Tensor::at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
  return data_[offset4(n, c, h, w)];
}

std::span<float> Tensor::slice0(std::size_t i) {
  const std::size_t stride = data_.size() / shape_.at(0);
  return std::span<float>(data_).subspan(i * stride, stride);
}

std::span<const float> Tensor::slice0(std::size_t i) const {
  const std::size_t stride = data_.size() / shape_.at(0);
  return std::span<const float>(data_).subspan(i * stride, stride);
}

bool Tensor::all_finite() const noexcept {
  for (float v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace udfc
