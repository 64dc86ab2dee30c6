#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace invnet {

class Rng;

/// Extents of a tensor, outermost first. Rank 1..4; NHWC for images.
using Shape = std::vector<std::int64_t>;

std::string shape_string(const Shape& shape);

/// Product of extents after validating rank and positivity.
std::size_t checked_element_count(const Shape& shape);

/// Cache-line aligned storage, so vectorized kernels see the same
/// alignment on every run and round identically.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() noexcept = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlignment); }

  template <class U>
  friend bool operator==(const AlignedAllocator&, const AlignedAllocator<U>&) noexcept {
    return true;
  }
};

using Storage = std::vector<double, AlignedAllocator<double>>;

/// Dense row-major array of doubles with up to four extents.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::int64_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  double* raw() noexcept { return data_.data(); }
  const double* raw() const noexcept { return data_.data(); }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  const double& operator[](std::size_t i) const noexcept { return data_[i]; }

  // Rank-4 NHWC access.
  double& at(std::int64_t n, std::int64_t h, std::int64_t w, std::int64_t c) noexcept {
    return data_[offset(n, h, w, c)];
  }
  const double& at(std::int64_t n, std::int64_t h, std::int64_t w, std::int64_t c) const noexcept {
    return data_[offset(n, h, w, c)];
  }

  /// Same data under new extents; element count must match.
  Tensor reshaped(Shape shape) const&;
  Tensor reshaped(Shape shape) &&;

  void fill(double value) noexcept;
  double sum() const noexcept;

  /// Throws NumericError naming `context` if any element is NaN or Inf.
  void require_finite(const char* context) const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::size_t offset(std::int64_t n, std::int64_t h, std::int64_t w, std::int64_t c) const noexcept {
    return static_cast<std::size_t>(((n * shape_[1] + h) * shape_[2] + w) * shape_[3] + c);
  }

  Shape shape_;
  Storage data_;
};

Tensor tensor_new(const Shape& shape, double fill);

/// i.i.d. U(-L, L) with L = sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform_init(const Shape& shape, std::int64_t fan_in, std::int64_t fan_out, Rng& rng);

double glorot_limit(std::int64_t fan_in, std::int64_t fan_out);

/// Zero-pads the two spatial axes of an NHWC tensor by `pad` on every side.
Tensor pad_spatial(const Tensor& x, std::int64_t pad);

/// Throws ShapeError unless `t` is rank 4.
void require_rank4(const Tensor& t, const char* context);

}  // namespace invnet
