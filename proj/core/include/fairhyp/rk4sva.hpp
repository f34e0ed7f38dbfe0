#pragma once

#include <array>
#include <cmath>
#include <string>

#include "fairhyp/errors.hpp"
#include "fairhyp/layers.hpp"

namespace fairhyp {

inline bool is_finite(double v) { return std::isfinite(v); }

/// One classical fourth-order Runge-Kutta step of dy/dt = f(t, y).
///
/// `Y` needs `Y + Y` and `double * Y`. Throws NumericError naming the stage
/// when f returns a non-finite value (checked through `is_finite(Y)`).
template <typename Y, typename F>
Y rk4_reference_step(F&& f, double t, const Y& y, double h) {
  auto checked = [&](const char* stage, Y v) {
    if (!is_finite(v)) throw NumericError(std::string("rk4 stage ") + stage + " is not finite");
    return v;
  };
  const Y k1 = checked("k1", h * f(t, y));
  const Y k2 = checked("k2", h * f(t + 0.5 * h, y + 0.5 * k1));
  const Y k3 = checked("k3", h * f(t + 0.5 * h, y + 0.5 * k2));
  const Y k4 = checked("k4", h * f(t + h, y + k3));
  return y + (1.0 / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

struct Rk4SvaConfig {
  std::size_t bands = 31;
  std::size_t kernel_h = 3, kernel_w = 3;
  std::size_t ref_channels = 16;
  /// Number of convolutions in the modulation generator (>= 1).
  std::size_t gate_layers = 1;
  double init_h = 1.0;
  double leaky_slope = 0.01;

  void validate() const;
};

/// Learnable adapter built on the RK4 combination rule.
///
///   k1 = F1(x), k2 = F2(x + h2/2 k1), k3 = F3(x + h3/2 k2), k4 = F4(x + h4 k3)
///   Y  = x + (k1 + 2 k2 + 2 k3 + k4) / 6
///   a  = sigmoid(A([Y, s])),  s = ref(x)
///   out = H(Y * (1 + a))
///
/// Operates on a cube laid out as (B, 1, H, W): bands are the channel axis and
/// every stage operator is a 2-D convolution across them.
class Rk4Sva {
 public:
  struct Trace {
    std::array<Var, 4> k;
    Var y_hat, ref, alpha, y_tilde, out;
  };

  Rk4Sva() = default;
  Rk4Sva(std::string prefix, Rk4SvaConfig config);

  const Rk4SvaConfig& config() const { return config_; }
  const std::string& prefix() const { return prefix_; }
  std::string step_name(int stage) const;  // stage in {2,3,4}
  /// Stage operator t (1..4), conv index 0 or 1.
  const nn::Conv& stage_conv(int stage, int index) const { return stages_[stage - 1][index]; }
  const nn::Conv& refiner() const { return refine_; }

  template <typename T>
  void init(ParamStore<T>& store) const;
  /// Zeroes every weight, sets the refiner to identity and the steps to init_h.
  template <typename T>
  void set_identity(ParamStore<T>& store) const;

  template <typename T>
  Var forward(Tape<T>& tape, Var x) const;
  template <typename T>
  Trace forward_trace(Tape<T>& tape, Var x) const;

  /// Tape-free forward on a (B,H,W) cube.
  template <typename T>
  Tensor<T> apply(const ParamStore<T>& store, const Tensor<T>& cube) const;

  std::size_t param_count() const;
  nn::Cost cost(const Dims4& in) const;

 private:
  template <typename T>
  Var stage(Tape<T>& tape, int t, Var x) const;

  std::string prefix_;
  Rk4SvaConfig config_;
  std::array<std::array<nn::Conv, 2>, 4> stages_;
  nn::Conv ref_;
  std::vector<nn::Conv> gate_;
  nn::Conv refine_;
};

}  // namespace fairhyp
