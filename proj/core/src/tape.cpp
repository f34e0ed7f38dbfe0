#include "fairhyp/tape.hpp"

#include "fairhyp/errors.hpp"

namespace fairhyp {

template <typename T>
Var Tape<T>::input(Tensor<T> value, bool requires_grad) {
  Node n;
  n.op = "input";
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

template <typename T>
Var Tape<T>::param(const std::string& name) {
  if (!params_) throw ConfigError("tape has no parameter store; cannot bind '" + name + "'");
  Node n;
  n.op = "param";
  n.value = params_->value(name);
  n.requires_grad = true;
  n.param_name = name;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

template <typename T>
Var Tape<T>::record(std::string_view op, Tensor<T> value, std::vector<Var> inputs,
                    BackwardFn backward, std::uint64_t flops) {
  Node n;
  n.op = std::string(op);
  n.value = std::move(value);
  n.inputs.reserve(inputs.size());
  for (Var v : inputs) {
    n.inputs.push_back(v.id);
    n.requires_grad = n.requires_grad || nodes_[v.id].requires_grad;
  }
  n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  total_flops_ += flops;
  scope_flops_[scopes_.empty() ? std::string("other") : scopes_.back()] += flops;
  return Var{nodes_.size() - 1};
}

template <typename T>
Tensor<T> Tape<T>::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (n.grad) return *n.grad;
  return Tensor<T>(n.value.shape());
}

template <typename T>
Tensor<T>& Tape<T>::grad_slot(Var v) {
  Node& n = nodes_[v.id];
  if (!n.grad) n.grad.emplace(n.value.shape());
  return *n.grad;
}

template <typename T>
void Tape<T>::backward(Var loss) {
  if (nodes_[loss.id].value.size() != 1) {
    throw ConfigError("backward: loss must be a scalar, got shape " +
                      nodes_[loss.id].value.shape().to_string());
  }
  for (auto& n : nodes_) n.grad.reset();
  grad_slot(loss).fill(T{1});

  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.grad || !n.requires_grad || n.inputs.empty()) continue;
    if (!n.backward) {
      throw InternalError("backward: op '" + n.op + "' was recorded without a gradient rule");
    }
    n.backward(*this, *n.grad);
  }

  if (!grads_) return;
  for (auto& n : nodes_) {
    if (n.param_name.empty() || !n.grad) continue;
    auto& g = grads_->grad(n.param_name);
    auto src = n.grad->data();
    auto dst = g.data();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace fairhyp
