#pragma once

#include <string>

#include "fairhyp/layers.hpp"

namespace fairhyp {

enum class ScanDirection { kForward, kBackward };

/// Parameters of one selective scan over tokens of width C with state size N.
///
/// Per token u_t: dt_t = softplus(W_dt u_t + b_dt) (width C),
/// B_t = W_B u_t and C_t = W_C u_t (width N), A = -exp(a_log) (C x N).
template <typename T>
struct ScanParams {
  Tensor<T> dt_weight;  // (C, C)
  Tensor<T> dt_bias;    // (C)
  Tensor<T> b_weight;   // (N, C)
  Tensor<T> c_weight;   // (N, C)
  Tensor<T> a_log;      // (C, N)
  Tensor<T> skip;       // (C)

  std::size_t width() const { return skip.size(); }
  std::size_t state() const { return a_log.shape()[1]; }
};

/// Discretized recurrence on explicit inputs, all laid out (rows, steps):
///   u, dt: (C, L); b, c: (N, L); a: (C, N) (already negative); skip: (C).
///   h_t = exp(dt_t a) * h_{t-1} + dt_t b_t u_t,  y_t = <c_t, h_t> + skip * u_t.
/// Backward direction visits steps L-1..0 and writes outputs at their own
/// index. Optional `states` receives |h| maxima per step for diagnostics.
template <typename T>
Tensor<T> scan_recurrence(const Tensor<T>& u, const Tensor<T>& dt, const Tensor<T>& b,
                          const Tensor<T>& c, const Tensor<T>& a, const Tensor<T>& skip,
                          ScanDirection dir, std::vector<T>* state_abs_max = nullptr);

/// Selective scan over a token sequence `tokens` of shape (L, C); returns (L, C).
template <typename T>
Tensor<T> selective_scan(const Tensor<T>& tokens, const ScanParams<T>& params,
                         ScanDirection dir);

/// Tape op: scans every spatial location of (C,L,H,W) features along L.
/// dt: (C,L,H,W), b and c: (N,L,H,W), a: (C,N), skip: (C).
template <typename T>
Var selective_scan_op(Tape<T>& tape, Var u, Var dt, Var b, Var c, Var a, Var skip,
                      ScanDirection dir);

/// FLOPs of one scan: per token C * (8N + 2).
std::uint64_t scan_flops(std::size_t tokens, std::size_t width, std::size_t state);

enum class FinalInput { kFusion, kMerge };

struct ScssConfig {
  std::size_t channels = 8;
  std::size_t state_dim = 16;
  /// Forward and backward scans share one parameter set.
  bool tied_scans = false;
  /// Which tensor feeds the final refiner: the residual fusion output or the
  /// merged spectral context.
  FinalInput final_input = FinalInput::kFusion;
  double leaky_slope = 0.01;

  void validate() const;
};

/// Spectral-context state space block on (C,B,H,W) features.
///
///   Qf, Qb = selective scans along B at every (h,w)
///   S      = [mean, max, min, var over (H,W)] broadcast back to (H,W)
///   F      = merge([Qf, Qb, S])                   (6C -> 2C -> C)
///   Cs     = fusion(down(F) * gate(x)) + x
///   out    = final(Cs)        (or final(F) with FinalInput::kMerge)
class Scss {
 public:
  Scss() = default;
  Scss(std::string prefix, ScssConfig config);

  const ScssConfig& config() const { return config_; }
  const std::string& prefix() const { return prefix_; }
  std::string scan_prefix(ScanDirection dir) const;

  template <typename T>
  void init(ParamStore<T>& store) const;
  /// Zeroes every weight (scan, merge, fusion); final refiner = identity.
  template <typename T>
  void set_identity(ParamStore<T>& store) const;

  /// Scan parameters of one direction copied out of the store.
  template <typename T>
  ScanParams<T> scan_params(const ParamStore<T>& store, ScanDirection dir) const;

  template <typename T>
  Var scan_branch(Tape<T>& tape, Var x, ScanDirection dir) const;
  /// Four statistics broadcast to (4C,B,H,W).
  template <typename T>
  Var stats_branch(Tape<T>& tape, Var x) const;
  template <typename T>
  Var merge(Tape<T>& tape, Var x) const;
  template <typename T>
  Var forward(Tape<T>& tape, Var x) const;

  std::size_t param_count() const;
  nn::Cost cost(const Dims4& in) const;

 private:
  struct ScanLayers {
    nn::Conv dt, b, c;
  };
  const ScanLayers& layers(ScanDirection dir) const;

  std::string prefix_;
  ScssConfig config_;
  ScanLayers fwd_, bwd_;
  nn::Conv merge_in_, merge_out_, down_, gate_, fusion_, final_;
};

}  // namespace fairhyp
