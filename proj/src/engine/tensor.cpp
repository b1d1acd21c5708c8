#include "pfesta/engine/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace pfesta {

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

namespace {
void validate_shape(const Shape& shape) {
  if (shape.empty()) throw DimensionError("tensor shape must have rank >= 1");
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_string(shape));
  }
}
}  // namespace

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, T fill) : shape_(std::move(shape)) {
  validate_shape(shape_);
  data_.assign(shape_size(shape_), fill);
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  validate_shape(shape_);
  if (data_.size() != shape_size(shape_)) {
    throw DimensionError("data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_string(shape_));
  }
}

template <typename T>
T BasicTensor<T>::item() const {
  if (data_.size() != 1) throw ContractError("item() requires a single-element tensor, got " + shape_string(shape_));
  return data_[0];
}

template <typename T>
BasicTensor<T> BasicTensor<T>::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size()) {
    throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  return BasicTensor(std::move(shape), data_);
}

template <typename T>
void add_inplace(BasicTensor<T>& dst, const BasicTensor<T>& src) {
  if (dst.shape() != src.shape()) {
    throw DimensionError("add_inplace shape mismatch " + shape_string(dst.shape()) + " vs " + shape_string(src.shape()));
  }
  auto d = dst.data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

template <typename T>
void axpy_inplace(BasicTensor<T>& dst, T alpha, const BasicTensor<T>& src) {
  if (dst.shape() != src.shape()) {
    throw DimensionError("axpy shape mismatch " + shape_string(dst.shape()) + " vs " + shape_string(src.shape()));
  }
  auto d = dst.data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += alpha * s[i];
}

template <typename T>
bool all_finite(const BasicTensor<T>& t) {
  return std::all_of(t.data().begin(), t.data().end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
double max_relative_error(const BasicTensor<T>& a, const BasicTensor<T>& b, double floor) {
  if (a.shape() != b.shape()) {
    throw DimensionError("compare shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a[i];
    const double y = b[i];
    const double denom = std::max({std::abs(x), std::abs(y), floor});
    worst = std::max(worst, std::abs(x - y) / denom);
  }
  return worst;
}

template <typename T>
double max_abs_difference(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("compare shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  }
  return worst;
}

#define PFESTA_INSTANTIATE(T)                                                              \
  template class BasicTensor<T>;                                                           \
  template void add_inplace<T>(BasicTensor<T>&, const BasicTensor<T>&);                    \
  template void axpy_inplace<T>(BasicTensor<T>&, T, const BasicTensor<T>&);                \
  template bool all_finite<T>(const BasicTensor<T>&);                                      \
  template double max_relative_error<T>(const BasicTensor<T>&, const BasicTensor<T>&, double); \
  template double max_abs_difference<T>(const BasicTensor<T>&, const BasicTensor<T>&);

PFESTA_INSTANTIATE(float)
PFESTA_INSTANTIATE(double)
#undef PFESTA_INSTANTIATE

}  // namespace pfesta
