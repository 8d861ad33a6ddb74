#pragma once

#include <algorithm>
#include <cstddef>
#include <cstring>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "jepa3d/errors.hpp"

namespace jepa3d {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

// Resolves a possibly negative axis against a rank.
inline std::size_t normalize_axis(long axis, std::size_t rank, const char* op) {
  const long r = static_cast<long>(rank);
  if (axis < -r || axis >= r)
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for rank " +
                     std::to_string(rank));
  return static_cast<std::size_t>(axis < 0 ? axis + r : axis);
}

// Dense row-major array. Rank 0 means a scalar with one element.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T{}) : shape_(std::move(shape)) {
    check_dims();
    data_.assign(shape_numel(shape_), fill);
  }

  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_dims();
    if (data_.size() != shape_numel(shape_))
      throw ShapeError("tensor: " + std::to_string(data_.size()) + " values do not fill shape " +
                       shape_str(shape_));
  }

  Tensor(Shape shape, std::initializer_list<T> data) : Tensor(std::move(shape), std::vector<T>(data)) {}

  static Tensor scalar(T v) { return Tensor(Shape{}, std::vector<T>{v}); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t dim(long axis) const { return shape_[normalize_axis(axis, rank(), "dim")]; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& at(std::initializer_list<std::size_t> index) { return data_[offset(index)]; }
  const T& at(std::initializer_list<std::size_t> index) const { return data_[offset(index)]; }

  T item() const {
    if (data_.size() != 1) throw ShapeError("item: tensor of shape " + shape_str(shape_) + " is not a scalar");
    return data_[0];
  }

  Tensor reshaped(Shape shape) const {
    if (shape_numel(shape) != size())
      throw ShapeError("reshape: cannot view " + shape_str(shape_) + " as " + shape_str(shape));
    return Tensor(std::move(shape), data_);
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  template <class U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  // Exact element and shape equality (bitwise for floating values).
  bool identical(const Tensor& other) const {
    return shape_ == other.shape_ &&
           (data_.empty() || std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(T)) == 0);
  }

 private:
  void check_dims() const {
    for (auto d : shape_)
      if (d == 0) throw ShapeError("tensor: zero-sized dimension in shape " + shape_str(shape_));
  }

  std::size_t offset(std::initializer_list<std::size_t> index) const {
    if (index.size() != shape_.size())
      throw ShapeError("at: index rank " + std::to_string(index.size()) + " does not match shape " +
                       shape_str(shape_));
    std::size_t off = 0;
    std::size_t k = 0;
    for (auto i : index) {
      if (i >= shape_[k]) throw ShapeError("at: index out of range for shape " + shape_str(shape_));
      off = off * shape_[k++] + i;
    }
    return off;
  }

  Shape shape_;
  std::vector<T> data_;
};

}  // namespace jepa3d
