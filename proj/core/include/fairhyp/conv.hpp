#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

#include "fairhyp/tensor.hpp"

namespace fairhyp {

enum class Padding { kSame, kValid };

/// 3-D convolution over (bands, height, width) with channels as feature maps.
///
/// Weights are stored as a matrix (C_out, C_in/groups * kb*kh*kw); the kernel
/// index runs (ci, kb, kh, kw) with kw fastest. The band axis always has
/// stride 1; "same" padding pads k/2 on both sides of every axis.
struct ConvSpec {
  std::size_t kb = 1, kh = 1, kw = 1;
  std::size_t stride_h = 1, stride_w = 1;
  std::size_t groups = 1;
  Padding padding = Padding::kSame;

  std::size_t kernel_volume() const { return kb * kh * kw; }
};

/// Resolved shapes for one convolution call.
struct ConvGeometry {
  Dims4 in;
  Dims4 out;
  std::size_t cin_per_group = 0;
  std::size_t cout_per_group = 0;
  std::size_t pad_b = 0, pad_h = 0, pad_w = 0;
};

/// Validates `spec` against the input and weight shapes; `name` labels errors.
ConvGeometry conv_geometry(const Dims4& in, const Shape& weight, const ConvSpec& spec,
                           std::string_view name = "conv");

/// Output extents for an input of `in` with `out_channels` filters.
Dims4 conv_output_dims(const Dims4& in, std::size_t out_channels, const ConvSpec& spec);

/// 2 * kb*kh*kw * C_in/groups * C_out * B_out*H_out*W_out, plus one add per
/// output element when a bias is present.
std::uint64_t conv_flops(const Dims4& in, std::size_t out_channels, const ConvSpec& spec,
                         bool bias);

/// y = conv(x, w) + bias. `bias` may be empty.
template <typename T>
void conv3d_forward(const ConvGeometry& g, const ConvSpec& spec, std::span<const T> x,
                    std::span<const T> w, std::span<const T> bias, std::span<T> y);

/// gx += conv^T(gy, w)   (the adjoint of conv3d_forward in x).
template <typename T>
void conv3d_backward_input(const ConvGeometry& g, const ConvSpec& spec, std::span<const T> gy,
                           std::span<const T> w, std::span<T> gx);

/// gw += d<gy, conv(x, w)>/dw.
template <typename T>
void conv3d_backward_weight(const ConvGeometry& g, const ConvSpec& spec, std::span<const T> gy,
                            std::span<const T> x, std::span<T> gw);

/// Convenience wrappers on whole tensors.
template <typename T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& w, const ConvSpec& spec,
                 const Tensor<T>* bias = nullptr);

/// Adjoint of conv3d in its input: maps an output-shaped tensor back to `in`.
template <typename T>
Tensor<T> conv3d_transpose(const Tensor<T>& y, const Tensor<T>& w, const ConvSpec& spec,
                           const Dims4& in);

}  // namespace fairhyp
