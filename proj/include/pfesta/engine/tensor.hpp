#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pfesta {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

// Raised when operand shapes are incompatible; the message names both shapes.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised when a caller violates an API precondition that is not a shape issue.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Dense row-major tensor. Shape dimensions are positive; data length always
// equals the product of the dimensions.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T{0});
  BasicTensor(Shape shape, std::vector<T> data);
  BasicTensor(Shape shape, std::initializer_list<T> data)
      : BasicTensor(std::move(shape), std::vector<T>(data)) {}

  static BasicTensor scalar(T value) { return BasicTensor(Shape{1}, std::vector<T>{value}); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  const std::vector<T>& values() const noexcept { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // 2-D element access (row, col); requires rank 2.
  T& at(std::size_t row, std::size_t col) { return data_[row * shape_[1] + col]; }
  const T& at(std::size_t row, std::size_t col) const { return data_[row * shape_[1] + col]; }

  T item() const;

  BasicTensor reshaped(Shape shape) const;

  template <typename U>
  BasicTensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return BasicTensor<U>(shape_, std::move(out));
  }

  bool operator==(const BasicTensor& other) const = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

// Elementwise helpers on plain values (no graph recording).
template <typename T>
BasicTensor<T> zeros_like(const BasicTensor<T>& t) {
  return BasicTensor<T>(t.shape(), T{0});
}

template <typename T>
void add_inplace(BasicTensor<T>& dst, const BasicTensor<T>& src);

template <typename T>
void axpy_inplace(BasicTensor<T>& dst, T alpha, const BasicTensor<T>& src);

template <typename T>
bool all_finite(const BasicTensor<T>& t);

// Largest |a-b| / max(|a|,|b|,floor) over all elements.
template <typename T>
double max_relative_error(const BasicTensor<T>& a, const BasicTensor<T>& b, double floor = 1e-12);

template <typename T>
double max_abs_difference(const BasicTensor<T>& a, const BasicTensor<T>& b);

}  // namespace pfesta
