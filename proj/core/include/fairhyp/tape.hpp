#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fairhyp/param_store.hpp"
#include "fairhyp/tensor.hpp"

namespace fairhyp {

/// Handle to a value recorded on a Tape.
struct Var {
  std::size_t id = 0;
};

/// Dynamic reverse-mode recorder. The graph is rebuilt on every forward pass.
///
/// Each recorded op stores its output value, the ids of its inputs and a
/// backward rule that scatters the output gradient into the inputs. Leaves
/// created with param() are bound to a ParamStore; backward() accumulates their
/// gradients into the store's grad slots.
///
/// Every op also reports an analytic FLOP count, attributed to the innermost
/// open scope, so an executed forward pass doubles as a cost measurement.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor<T>& grad_out)>;

  /// Training tape: backward() accumulates parameter gradients into `params`.
  explicit Tape(ParamStore<T>* params = nullptr) : params_(params), grads_(params) {}
  /// Inference tape: parameters are read-only.
  explicit Tape(const ParamStore<T>* params) : params_(params), grads_(nullptr) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  const ParamStore<T>* params() const { return params_; }

  Var input(Tensor<T> value, bool requires_grad = false);
  Var param(const std::string& name);

  /// Records an op. `backward` may be empty only for ops whose output never
  /// needs a gradient; backward() raises InternalError otherwise.
  Var record(std::string_view op, Tensor<T> value, std::vector<Var> inputs, BackwardFn backward,
             std::uint64_t flops = 0);

  const Tensor<T>& value(Var v) const { return nodes_[v.id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  const std::string& op(Var v) const { return nodes_[v.id].op; }
  std::size_t size() const { return nodes_.size(); }

  /// Gradient of the last backward() target with respect to `v`. Zero-filled
  /// if no gradient reached `v`.
  Tensor<T> grad(Var v) const;

  /// Mutable gradient accumulator for `v`, allocated on first use.
  Tensor<T>& grad_slot(Var v);

  /// Propagates d(loss)/d(.) through the graph; `loss` must hold one element.
  void backward(Var loss);

  void push_scope(std::string name) { scopes_.push_back(std::move(name)); }
  void pop_scope() { scopes_.pop_back(); }

  std::uint64_t flops() const { return total_flops_; }
  const std::map<std::string, std::uint64_t>& flops_by_scope() const { return scope_flops_; }

 private:
  struct Node {
    std::string op;
    Tensor<T> value;
    std::optional<Tensor<T>> grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    std::string param_name;
  };

  const ParamStore<T>* params_;
  ParamStore<T>* grads_;
  std::deque<Node> nodes_;
  std::vector<std::string> scopes_;
  std::uint64_t total_flops_ = 0;
  std::map<std::string, std::uint64_t> scope_flops_;
};

/// RAII scope for FLOP attribution.
template <typename T>
class TapeScope {
 public:
  TapeScope(Tape<T>& tape, std::string name) : tape_(tape) { tape_.push_scope(std::move(name)); }
  ~TapeScope() { tape_.pop_scope(); }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<T>& tape_;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace fairhyp
