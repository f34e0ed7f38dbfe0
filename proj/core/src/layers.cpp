#include "fairhyp/layers.hpp"

#include "fairhyp/errors.hpp"
#include "fairhyp/ops.hpp"

namespace fairhyp::nn {

Conv::Conv(std::string name, std::size_t in_channels, std::size_t out_channels, ConvSpec spec,
           bool bias)
    : name_(std::move(name)), in_(in_channels), out_(out_channels), spec_(spec), bias_(bias) {
  if (in_ == 0 || out_ == 0) throw ConfigError("conv '" + name_ + "': channel counts must be >= 1");
  if (in_ % spec_.groups != 0 || out_ % spec_.groups != 0) {
    throw ConfigError("conv '" + name_ + "': groups " + std::to_string(spec_.groups) +
                      " must divide " + std::to_string(in_) + " -> " + std::to_string(out_));
  }
}

template <typename T>
void Conv::init(ParamStore<T>& store) const {
  const std::size_t fan_in = (in_ / spec_.groups) * spec_.kernel_volume();
  store.add(weight_name(), Shape{out_, fan_in}, Init::fan_in_uniform(fan_in));
  if (bias_) store.add(bias_name(), Shape{out_}, Init::zeros());
}

template <typename T>
void Conv::zero(ParamStore<T>& store) const {
  store.value(weight_name()).fill(T{0});
  if (bias_) store.value(bias_name()).fill(T{0});
}

template <typename T>
void Conv::set_identity(ParamStore<T>& store) const {
  if (in_ != out_ || spec_.kernel_volume() != 1 || spec_.groups != 1) {
    throw ConfigError("conv '" + name_ + "': identity needs a square pointwise kernel");
  }
  auto& w = store.value(weight_name());
  w.fill(T{0});
  for (std::size_t i = 0; i < out_; ++i) w[i * in_ + i] = T{1};
  if (bias_) store.value(bias_name()).fill(T{0});
}

template <typename T>
Var Conv::forward(Tape<T>& tape, Var x) const {
  const Var w = tape.param(weight_name());
  std::optional<Var> b;
  if (bias_) b = tape.param(bias_name());
  return conv3d(tape, x, w, b, spec_, name_);
}

std::size_t Conv::param_count() const {
  return out_ * (in_ / spec_.groups) * spec_.kernel_volume() + (bias_ ? out_ : 0);
}

Cost Conv::cost(const Dims4& in, Dims4* out) const {
  const Cost c{conv_flops(in, out_, spec_, bias_), param_count()};
  if (out) *out = conv_output_dims(in, out_, spec_);
  return c;
}

ConvSpec spatial_kernel(std::size_t kh, std::size_t kw, std::size_t groups) {
  ConvSpec s;
  s.kh = kh;
  s.kw = kw;
  s.groups = groups;
  return s;
}

ConvSpec spectral_kernel(std::size_t kb) {
  ConvSpec s;
  s.kb = kb;
  return s;
}

ConvSpec cube_kernel(std::size_t k) {
  ConvSpec s;
  s.kb = s.kh = s.kw = k;
  return s;
}

ConvSpec pointwise() { return ConvSpec{}; }

#define FAIRHYP_INSTANTIATE(T)                                  \
  template void Conv::init<T>(ParamStore<T>&) const;            \
  template void Conv::zero<T>(ParamStore<T>&) const;            \
  template void Conv::set_identity<T>(ParamStore<T>&) const;    \
  template Var Conv::forward<T>(Tape<T>&, Var) const;

FAIRHYP_INSTANTIATE(float)
FAIRHYP_INSTANTIATE(double)

#undef FAIRHYP_INSTANTIATE

}  // namespace fairhyp::nn
