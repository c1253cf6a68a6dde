#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "binarray/error.hpp"

namespace binarray {

inline std::size_t shape_product(std::span<const std::size_t> shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(std::span<const std::size_t> shape);

/// Shape-tagged dense array in row-major order.
template <class T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;

  explicit BasicTensor(std::vector<std::size_t> shape)
      : shape_(std::move(shape)), data_(checked_size(shape_), T{}) {}

  BasicTensor(std::vector<std::size_t> shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (checked_size(shape_) != data_.size()) {
      throw InvalidInput("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_string(shape_));
    }
    if constexpr (std::is_floating_point_v<T>) {
      for (const T v : data_) {
        if (!std::isfinite(v)) throw InvalidInput("tensor contains a non-finite value");
      }
    }
  }

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<const T> data() const noexcept { return data_; }
  std::span<T> data() noexcept { return data_; }
  const std::vector<T>& values() const noexcept { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  bool operator==(const BasicTensor&) const = default;

 private:
  static std::size_t checked_size(const std::vector<std::size_t>& shape) {
    for (const std::size_t d : shape) {
      if (d == 0) throw InvalidInput("tensor dimensions must be positive, got " + shape_string(shape));
    }
    return shape.empty() ? 0 : shape_product(shape);
  }

  std::vector<std::size_t> shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<double>;
using IntTensor = BasicTensor<std::int32_t>;

}  // namespace binarray
