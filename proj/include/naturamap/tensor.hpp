#pragma once

#include <cstddef>
#include <functional>
#include <new>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "naturamap/error.hpp"

namespace naturamap {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

// Every buffer starts on a 64-byte boundary. Vectorized kernels peel
// differently depending on alignment, so a fixed alignment keeps floating-point
// results independent of where the allocator happens to place a buffer.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), kAlign));
  }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

// Dense row-major n-dimensional array. Images are stored H x W x C, batches
// N x H x W x C.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T{0})
      : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {
    check_extents();
  }

  Tensor(Shape shape, AlignedVector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    check_extents();
    if (data_.size() != shape_numel(shape_)) {
      throw ShapeError("tensor data has " + std::to_string(data_.size()) +
                       " elements, shape " + shape_to_string(shape_) +
                       " needs " + std::to_string(shape_numel(shape_)));
    }
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  AlignedVector<T>& storage() noexcept { return data_; }
  const AlignedVector<T>& storage() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  // Rank-2 and rank-3 accessors (row, col[, channel]).
  T& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  const T& at(std::size_t r, std::size_t c) const {
    return data_[r * shape_[1] + c];
  }
  T& at(std::size_t r, std::size_t c, std::size_t ch) {
    return data_[(r * shape_[1] + c) * shape_[2] + ch];
  }
  const T& at(std::size_t r, std::size_t c, std::size_t ch) const {
    return data_[(r * shape_[1] + c) * shape_[2] + ch];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  Tensor reshaped(Shape shape) const {
    return Tensor(std::move(shape), data_);
  }

  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, AlignedVector<U>(data_.begin(), data_.end()));
  }

  bool operator==(const Tensor& other) const = default;

 private:
  void check_extents() const {
    for (std::size_t e : shape_) {
      if (e == 0) {
        throw ShapeError("tensor extents must be positive, got " +
                         shape_to_string(shape_));
      }
    }
  }

  Shape shape_;
  AlignedVector<T> data_;
};

using TensorArray = Tensor<float>;

inline std::string shape_to_string(const Shape& shape) {
  std::string out = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + ")";
}

}  // namespace naturamap
