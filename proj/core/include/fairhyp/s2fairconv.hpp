#pragma once

#include <string>

#include "fairhyp/layers.hpp"

namespace fairhyp {

struct S2FairConfig {
  std::size_t channels = 8;
  std::size_t bands = 31;
  /// Fraction of channels refined by the 3-D convolution in the second stage.
  double active_fraction = 0.25;
  /// Hidden width of the channel-mixing projection; 0 selects 2 * channels.
  std::size_t mlp_hidden = 0;

  void validate() const;
  std::size_t quarter() const { return channels / 4; }
  std::size_t active_channels() const;
  std::size_t hidden() const { return mlp_hidden ? mlp_hidden : 2 * channels; }
  /// Hidden width of the band-significance projection.
  std::size_t band_hidden() const { return bands >= 4 ? bands / 4 : 1; }
};

/// Spatial-spectral fair convolution on (C,B,H,W) features.
///
/// Stage one (multi-receptive-field extraction) sums three paths. Each path
/// transforms one disjoint quarter of the channels and contributes a third of
/// the identity elsewhere, so the sum is
///
///   x + [dw(x_q0) | spec(x_q1) | x_q2 * (2 sigmoid(z) - 1) | 0]
///
/// where dw is a depthwise (1,3,3) conv, spec a (3,1,1) conv and z a
/// squeeze-excite score over the band axis. Zero weights give the identity.
///
/// Stage two (sparse-preserving refinement) runs a (3,3,3) conv on the first
/// active channels only, concatenates the untouched passive channels and mixes
/// all of them with a two-layer pointwise projection (ReLU between).
class S2FairConv {
 public:
  struct RefineTrace {
    Var active, passive, conv, concat, out;
  };

  S2FairConv() = default;
  S2FairConv(std::string prefix, S2FairConfig config);

  const S2FairConfig& config() const { return config_; }
  const std::string& prefix() const { return prefix_; }

  template <typename T>
  void init(ParamStore<T>& store) const;
  /// Zeroes all path weights and the active conv; the projection becomes the
  /// exact identity relu(x) - relu(-x) (requires hidden == 2C).
  template <typename T>
  void set_identity(ParamStore<T>& store) const;
  /// Zeroes the weights of one extraction path: 0 spatial, 1 spectral, 2 band.
  template <typename T>
  void zero_path(ParamStore<T>& store, int path) const;

  template <typename T>
  Var mrfe(Tape<T>& tape, Var x) const;
  template <typename T>
  RefineTrace spfr_trace(Tape<T>& tape, Var x) const;
  template <typename T>
  Var spfr(Tape<T>& tape, Var x) const;
  template <typename T>
  Var forward(Tape<T>& tape, Var x) const;

  std::size_t param_count() const;
  nn::Cost mrfe_cost(const Dims4& in) const;
  nn::Cost spfr_cost(const Dims4& in) const;
  nn::Cost cost(const Dims4& in) const;

 private:
  void check_input(const Dims4& d) const;

  std::string prefix_;
  S2FairConfig config_;
  nn::Conv spatial_, spectral_, band_down_, band_up_;
  nn::Conv active_conv_, mlp_in_, mlp_out_;
};

}  // namespace fairhyp
