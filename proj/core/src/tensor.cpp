#include "invnet/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>
#include <utility>

#include "invnet/error.hpp"
#include "invnet/rng.hpp"

namespace invnet {

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ", ";
    out << shape[i];
  }
  out << ')';
  return out.str();
}

std::size_t checked_element_count(const Shape& shape) {
  if (shape.empty() || shape.size() > 4) {
    throw ShapeError("tensor rank must be 1..4, got " + std::to_string(shape.size()));
  }
  std::size_t count = 1;
  for (auto extent : shape) {
    if (extent < 1) throw ShapeError("non-positive extent in shape " + shape_string(shape));
    count *= static_cast<std::size_t>(extent);
  }
  return count;
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(checked_element_count(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(data.begin(), data.end()) {
  if (checked_element_count(shape_) != data_.size()) {
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_string(shape_));
  }
}

Tensor Tensor::reshaped(Shape shape) const& {
  Tensor copy = *this;
  return std::move(copy).reshaped(std::move(shape));
}

Tensor Tensor::reshaped(Shape shape) && {
  if (checked_element_count(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  shape_ = std::move(shape);
  return std::move(*this);
}

void Tensor::fill(double value) noexcept { std::fill(data_.begin(), data_.end(), value); }

double Tensor::sum() const noexcept { return std::accumulate(data_.begin(), data_.end(), 0.0); }

void Tensor::require_finite(const char* context) const {
  for (double v : data_) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite value in ") + context);
  }
}

Tensor tensor_new(const Shape& shape, double fill) { return Tensor(shape, fill); }

double glorot_limit(std::int64_t fan_in, std::int64_t fan_out) {
  if (fan_in < 1 || fan_out < 1) throw ArgumentError("glorot fan_in and fan_out must be >= 1");
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

Tensor glorot_uniform_init(const Shape& shape, std::int64_t fan_in, std::int64_t fan_out, Rng& rng) {
  const double limit = glorot_limit(fan_in, fan_out);
  Tensor t(shape);
  for (double& v : t.data()) v = rng.uniform(-limit, limit);
  return t;
}

void require_rank4(const Tensor& t, const char* context) {
  if (t.rank() != 4) {
    throw ShapeError(std::string(context) + " expects an NHWC tensor, got " + shape_string(t.shape()));
  }
}

Tensor pad_spatial(const Tensor& x, std::int64_t pad) {
  require_rank4(x, "pad_spatial");
  if (pad < 0) throw ShapeError("negative padding");
  if (pad == 0) return x;
  const auto n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  Tensor out({n, h + 2 * pad, w + 2 * pad, c});
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t i = 0; i < h; ++i) {
      const double* src = &x.at(b, i, 0, 0);
      std::copy(src, src + w * c, &out.at(b, i + pad, pad, 0));
    }
  }
  return out;
}

}  // namespace invnet
