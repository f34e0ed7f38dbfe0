#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "fairhyp/conv.hpp"
#include "fairhyp/tape.hpp"
#include "fairhyp/tensor.hpp"

namespace fairhyp {

// Differentiable primitives. Every op records its analytic FLOP count on the
// tape; elementwise arithmetic and activations count one FLOP per output
// element, data movement (reshape, slice, concat, broadcast, upsample, flips)
// counts zero.

template <typename T> Var add(Tape<T>& t, Var a, Var b);
template <typename T> Var sub(Tape<T>& t, Var a, Var b);
template <typename T> Var mul(Tape<T>& t, Var a, Var b);
template <typename T> Var scale(Tape<T>& t, Var a, T c);
/// s * a where `s` holds a single element.
template <typename T> Var scale_by(Tape<T>& t, Var a, Var s);

template <typename T> Var leaky_relu(Tape<T>& t, Var a, T slope);
template <typename T> Var relu(Tape<T>& t, Var a);
template <typename T> Var sigmoid(Tape<T>& t, Var a);
template <typename T> Var softplus(Tape<T>& t, Var a);
template <typename T> Var exponential(Tape<T>& t, Var a);

template <typename T> Var reshape(Tape<T>& t, Var a, Shape shape);
/// Concatenates rank-4 tensors along the channel axis.
template <typename T> Var concat_channels(Tape<T>& t, std::span<const Var> parts);
/// Channels [begin, end) of a rank-4 tensor.
template <typename T> Var slice_channels(Tape<T>& t, Var a, std::size_t begin, std::size_t end);
/// (C,B,H,W) -> (B,C,H,W).
template <typename T> Var swap_channel_band(Tape<T>& t, Var a);
/// Reverses the band axis.
template <typename T> Var flip_bands(Tape<T>& t, Var a);
/// (C,B,1,1) -> (C,B,H,W) by repetition.
template <typename T> Var broadcast_spatial(Tape<T>& t, Var a, std::size_t h, std::size_t w);
/// Nearest-neighbour upsampling by 2 in H and W, cropped to (h, w).
template <typename T> Var upsample_nearest(Tape<T>& t, Var a, std::size_t h, std::size_t w);

/// Convolution; `bias` is optional. `name` labels configuration errors.
template <typename T>
Var conv3d(Tape<T>& t, Var x, Var weight, std::optional<Var> bias, const ConvSpec& spec,
           std::string_view name = "conv");

/// Four per-(c,b) spatial summaries, each shaped (C,B,1,1).
struct StatVars {
  Var mean, max, min, var;
};

/// Mean, max, min and population variance over (H,W).
///
/// Sums run over the sorted values of each plane, so the result depends only
/// on the multiset of values: any spatial permutation gives identical bits.
template <typename T> StatVars spatial_stats(Tape<T>& t, Var x);
/// Mean over (H,W): (C,B,H,W) -> (C,B,1,1).
template <typename T> Var spatial_mean(Tape<T>& t, Var x);

template <typename T> Var sum(Tape<T>& t, Var a);
/// sum(a * weights) with a constant weight tensor.
template <typename T> Var weighted_sum(Tape<T>& t, Var a, const Tensor<T>& weights);
/// mean((a - target)^2).
template <typename T> Var mse(Tape<T>& t, Var a, const Tensor<T>& target);
/// -log softmax(logits)[label] for a logits tensor of any shape.
template <typename T> Var softmax_cross_entropy(Tape<T>& t, Var logits, std::size_t label);

/// Tape-free form of spatial_stats on a (C,B,H,W) tensor; each output is (C,B).
template <typename T>
struct SpatialStats {
  Tensor<T> mean, max, min, var;
};
template <typename T> SpatialStats<T> reduce_stats(const Tensor<T>& x);

}  // namespace fairhyp
