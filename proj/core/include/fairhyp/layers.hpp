#pragma once

#include <cstdint>
#include <string>

#include "fairhyp/conv.hpp"
#include "fairhyp/param_store.hpp"
#include "fairhyp/tape.hpp"

namespace fairhyp::nn {

/// Analytic cost of a layer for one input: FLOPs (2 x MACs plus elementwise
/// work) and learnable scalar count.
struct Cost {
  std::uint64_t flops = 0;
  std::uint64_t params = 0;

  Cost& operator+=(const Cost& o) {
    flops += o.flops;
    params += o.params;
    return *this;
  }
};

/// A convolution whose weights live in a ParamStore under "<name>.weight"
/// and "<name>.bias".
class Conv {
 public:
  Conv() = default;
  Conv(std::string name, std::size_t in_channels, std::size_t out_channels, ConvSpec spec,
       bool bias = true);

  const std::string& name() const { return name_; }
  std::string weight_name() const { return name_ + ".weight"; }
  std::string bias_name() const { return name_ + ".bias"; }
  std::size_t in_channels() const { return in_; }
  std::size_t out_channels() const { return out_; }
  const ConvSpec& spec() const { return spec_; }
  bool has_bias() const { return bias_; }

  /// Fan-in scaled uniform weights, zero bias.
  template <typename T>
  void init(ParamStore<T>& store) const;
  /// Zero weights and bias.
  template <typename T>
  void zero(ParamStore<T>& store) const;
  /// Pointwise identity (requires a square 1x1x1 ungrouped kernel).
  template <typename T>
  void set_identity(ParamStore<T>& store) const;

  template <typename T>
  Var forward(Tape<T>& tape, Var x) const;

  std::size_t param_count() const;
  /// Cost for input `in`; writes the output extents to `out` when non-null.
  Cost cost(const Dims4& in, Dims4* out = nullptr) const;

 private:
  std::string name_;
  std::size_t in_ = 0, out_ = 0;
  ConvSpec spec_;
  bool bias_ = true;
};

/// (1, kh, kw) kernel with "same" padding.
ConvSpec spatial_kernel(std::size_t kh = 3, std::size_t kw = 3, std::size_t groups = 1);
/// (kb, 1, 1) kernel with "same" padding.
ConvSpec spectral_kernel(std::size_t kb = 3);
/// (k, k, k) kernel with "same" padding.
ConvSpec cube_kernel(std::size_t k = 3);
/// 1x1x1 projection.
ConvSpec pointwise();

}  // namespace fairhyp::nn
