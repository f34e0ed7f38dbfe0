#pragma once

#include <array>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace fairhyp {

/// Extents of a dense tensor, rank 1 to 4, every extent >= 1.
///
/// A default-constructed Shape has rank 0 and describes the empty tensor.
class Shape {
 public:
  static constexpr std::size_t kMaxRank = 4;

  Shape() = default;
  Shape(std::initializer_list<std::size_t> extents);
  explicit Shape(std::span<const std::size_t> extents);

  std::size_t rank() const { return rank_; }
  std::size_t operator[](std::size_t axis) const { return extents_[axis]; }
  std::size_t numel() const;
  std::span<const std::size_t> extents() const { return {extents_.data(), rank_}; }

  /// "2x3x4x5"
  std::string to_string() const;

  friend bool operator==(const Shape& a, const Shape& b) {
    return a.rank_ == b.rank_ && a.extents_ == b.extents_;
  }

 private:
  std::array<std::size_t, kMaxRank> extents_{};
  std::size_t rank_ = 0;
};

/// Rank-4 view of a shape as (channels, bands, height, width).
struct Dims4 {
  std::size_t c = 1, b = 1, h = 1, w = 1;
  std::size_t numel() const { return c * b * h * w; }
  std::size_t plane() const { return h * w; }
  Shape shape() const { return Shape{c, b, h, w}; }
};

/// Throws ConfigError unless `shape` has rank 4.
Dims4 dims4(const Shape& shape, const char* what = "tensor");

/// Dense row-major tensor; element (c,b,h,w) lives at ((c*B + b)*H + h)*W + w.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{0});
  Tensor(Shape shape, std::vector<T> data);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T>& storage() { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& at(std::size_t c, std::size_t b, std::size_t h, std::size_t w) {
    return data_[((c * shape_[1] + b) * shape_[2] + h) * shape_[3] + w];
  }
  const T& at(std::size_t c, std::size_t b, std::size_t h, std::size_t w) const {
    return data_[((c * shape_[1] + b) * shape_[2] + h) * shape_[3] + w];
  }

  void fill(T v);

  /// Copy with a new shape of identical element count.
  Tensor reshaped(Shape shape) const;

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.size());
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return Tensor<U>(shape_, std::move(out));
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace fairhyp
