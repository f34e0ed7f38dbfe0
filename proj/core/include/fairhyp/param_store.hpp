#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "fairhyp/tensor.hpp"

namespace fairhyp {

/// How a parameter is filled when it is registered.
struct Init {
  enum class Kind { kFanInUniform, kZeros, kConstant };
  Kind kind = Kind::kZeros;
  double value = 0.0;  // fan-in for kFanInUniform, fill value for kConstant

  static Init fan_in_uniform(std::size_t fan_in) {
    return {Kind::kFanInUniform, static_cast<double>(fan_in)};
  }
  static Init zeros() { return {Kind::kZeros, 0.0}; }
  static Init constant(double v) { return {Kind::kConstant, v}; }
};

/// Named learnable tensors with matching gradient slots.
///
/// Names are hierarchical ("scss.fwd.delta.weight") and iteration is
/// lexicographic. Each entry draws its initial values from a stream derived
/// from (store seed, name), so registration order does not affect values and
/// float/double stores built from one seed agree up to rounding.
template <typename T>
class ParamStore {
 public:
  struct Entry {
    Tensor<T> value;
    Tensor<T> grad;
  };
  using Map = std::map<std::string, Entry>;

  explicit ParamStore(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  /// Registers and initializes a parameter; duplicate names are a ConfigError.
  Entry& add(const std::string& name, Shape shape, Init init);

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  Entry& at(const std::string& name);
  const Entry& at(const std::string& name) const;
  Tensor<T>& value(const std::string& name) { return at(name).value; }
  const Tensor<T>& value(const std::string& name) const { return at(name).value; }
  Tensor<T>& grad(const std::string& name) { return at(name).grad; }

  /// Replaces a value; the shape must match the registered one.
  void set(const std::string& name, Tensor<T> value);

  const Map& entries() const { return entries_; }
  Map& entries() { return entries_; }
  std::size_t size() const { return entries_.size(); }

  /// Total scalar count, optionally restricted to names starting with `prefix`.
  std::size_t census(const std::string& prefix = "") const;

  void zero_grads();
  void zero_values();

  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out(seed_);
    for (const auto& [name, e] : entries_) {
      auto& dst = out.entries()[name];
      dst.value = e.value.template cast<U>();
      dst.grad = e.grad.template cast<U>();
    }
    return out;
  }

 private:
  std::uint64_t seed_;
  Map entries_;
};

extern template class ParamStore<float>;
extern template class ParamStore<double>;

}  // namespace fairhyp
