#include "fairhyp/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "fairhyp/errors.hpp"

namespace fairhyp {

namespace {

void check_extents(std::span<const std::size_t> extents) {
  if (extents.empty() || extents.size() > Shape::kMaxRank) {
    throw ConfigError("tensor rank must be 1..4, got " + std::to_string(extents.size()));
  }
  for (std::size_t e : extents) {
    if (e == 0) throw ConfigError("tensor extents must be >= 1");
  }
}

}  // namespace

Shape::Shape(std::initializer_list<std::size_t> extents)
    : Shape(std::span<const std::size_t>(extents.begin(), extents.size())) {}

Shape::Shape(std::span<const std::size_t> extents) {
  check_extents(extents);
  rank_ = extents.size();
  std::copy(extents.begin(), extents.end(), extents_.begin());
}

std::size_t Shape::numel() const {
  if (rank_ == 0) return 0;
  std::size_t n = 1;
  for (std::size_t i = 0; i < rank_; ++i) n *= extents_[i];
  return n;
}

std::string Shape::to_string() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < rank_; ++i) {
    if (i) os << 'x';
    os << extents_[i];
  }
  return os.str();
}

Dims4 dims4(const Shape& shape, const char* what) {
  if (shape.rank() != 4) {
    throw ConfigError(std::string(what) + ": expected rank-4 (C,B,H,W), got shape " +
                      shape.to_string());
  }
  return {shape[0], shape[1], shape[2], shape[3]};
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(shape), data_(shape.numel(), fill) {}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape_.numel()) {
    throw ConfigError("tensor data length " + std::to_string(data_.size()) +
                      " does not match shape " + shape_.to_string());
  }
}

template <typename T>
void Tensor<T>::fill(T v) {
  std::fill(data_.begin(), data_.end(), v);
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
  if (shape.numel() != data_.size()) {
    throw ConfigError("cannot reshape " + shape_.to_string() + " to " + shape.to_string());
  }
  return Tensor<T>(shape, data_);
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace fairhyp
