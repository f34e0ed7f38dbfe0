#include "fairhyp/param_store.hpp"

#include <cmath>

#include "fairhyp/errors.hpp"
#include "fairhyp/rng.hpp"

namespace fairhyp {

template <typename T>
typename ParamStore<T>::Entry& ParamStore<T>::add(const std::string& name, Shape shape,
                                                  Init init) {
  if (entries_.count(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  Entry e{Tensor<T>(shape), Tensor<T>(shape)};
  switch (init.kind) {
    case Init::Kind::kZeros:
      break;
    case Init::Kind::kConstant:
      e.value.fill(static_cast<T>(init.value));
      break;
    case Init::Kind::kFanInUniform: {
      const double bound = 1.0 / std::sqrt(std::max(init.value, 1.0));
      Rng rng(derive_seed(seed_, hash_name(name)));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (auto& v : e.value.data()) v = static_cast<T>(dist(rng));
      break;
    }
  }
  return entries_.emplace(name, std::move(e)).first->second;
}

template <typename T>
typename ParamStore<T>::Entry& ParamStore<T>::at(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return it->second;
}

template <typename T>
const typename ParamStore<T>::Entry& ParamStore<T>::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return it->second;
}

template <typename T>
void ParamStore<T>::set(const std::string& name, Tensor<T> value) {
  auto& e = at(name);
  if (!(e.value.shape() == value.shape())) {
    throw ConfigError("parameter '" + name + "' has shape " + e.value.shape().to_string() +
                      ", cannot assign " + value.shape().to_string());
  }
  e.value = std::move(value);
}

template <typename T>
std::size_t ParamStore<T>::census(const std::string& prefix) const {
  std::size_t n = 0;
  for (auto it = entries_.lower_bound(prefix); it != entries_.end(); ++it) {
    if (it->first.compare(0, prefix.size(), prefix) != 0) break;
    n += it->second.value.size();
  }
  return n;
}

template <typename T>
void ParamStore<T>::zero_grads() {
  for (auto& [_, e] : entries_) e.grad.fill(T{0});
}

template <typename T>
void ParamStore<T>::zero_values() {
  for (auto& [_, e] : entries_) e.value.fill(T{0});
}

template class ParamStore<float>;
template class ParamStore<double>;

}  // namespace fairhyp
