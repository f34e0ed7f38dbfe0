#include "fairhyp/s2fairconv.hpp"

#include <cmath>

#include "fairhyp/errors.hpp"
#include "fairhyp/ops.hpp"

namespace fairhyp {

void S2FairConfig::validate() const {
  if (channels == 0 || channels % 4 != 0) {
    throw ConfigError("s2fairconv: channels must be a positive multiple of 4, got " +
                      std::to_string(channels));
  }
  if (bands == 0) throw ConfigError("s2fairconv: bands must be >= 1");
  if (!(active_fraction > 0.0 && active_fraction < 1.0)) {
    throw ConfigError("s2fairconv: active_fraction must lie in (0,1)");
  }
  const std::size_t a = active_channels();
  if (a == 0 || a >= channels) {
    throw ConfigError("s2fairconv: active channel count must be in [1, C-1], got " +
                      std::to_string(a));
  }
}

std::size_t S2FairConfig::active_channels() const {
  return static_cast<std::size_t>(std::llround(static_cast<double>(channels) * active_fraction));
}

S2FairConv::S2FairConv(std::string prefix, S2FairConfig config)
    : prefix_(std::move(prefix)), config_(config) {
  config_.validate();
  const std::size_t q = config_.quarter();
  const std::size_t C = config_.channels;
  const std::size_t a = config_.active_channels();
  spatial_ = nn::Conv(prefix_ + ".mrfe.spatial", q, q, nn::spatial_kernel(3, 3, q));
  spectral_ = nn::Conv(prefix_ + ".mrfe.spectral", q, q, nn::spectral_kernel(3));
  band_down_ = nn::Conv(prefix_ + ".mrfe.band_down", config_.bands, config_.band_hidden(),
                        nn::pointwise());
  band_up_ = nn::Conv(prefix_ + ".mrfe.band_up", config_.band_hidden(), config_.bands,
                      nn::pointwise());
  active_conv_ = nn::Conv(prefix_ + ".spfr.conv", a, a, nn::cube_kernel(3));
  mlp_in_ = nn::Conv(prefix_ + ".spfr.mlp_in", C, config_.hidden(), nn::pointwise());
  mlp_out_ = nn::Conv(prefix_ + ".spfr.mlp_out", config_.hidden(), C, nn::pointwise());
}

template <typename T>
void S2FairConv::init(ParamStore<T>& store) const {
  for (const auto* c : {&spatial_, &spectral_, &band_down_, &band_up_, &active_conv_, &mlp_in_,
                        &mlp_out_}) {
    c->init(store);
  }
}

template <typename T>
void S2FairConv::zero_path(ParamStore<T>& store, int path) const {
  switch (path) {
    case 0:
      spatial_.zero(store);
      break;
    case 1:
      spectral_.zero(store);
      break;
    case 2:
      band_down_.zero(store);
      band_up_.zero(store);
      break;
    default:
      throw ConfigError("s2fairconv: path index must be 0, 1 or 2");
  }
}

template <typename T>
void S2FairConv::set_identity(ParamStore<T>& store) const {
  for (int p = 0; p < 3; ++p) zero_path(store, p);
  active_conv_.zero(store);
  const std::size_t C = config_.channels;
  if (config_.hidden() != 2 * C) {
    throw ConfigError("s2fairconv: identity projection needs hidden width 2C");
  }
  auto& w1 = store.value(mlp_in_.weight_name());  // (2C, C)
  auto& w2 = store.value(mlp_out_.weight_name());  // (C, 2C)
  w1.fill(T{0});
  w2.fill(T{0});
  for (std::size_t i = 0; i < C; ++i) {
    w1[i * C + i] = T{1};
    w1[(C + i) * C + i] = T{-1};
    w2[i * 2 * C + i] = T{1};
    w2[i * 2 * C + C + i] = T{-1};
  }
  store.value(mlp_in_.bias_name()).fill(T{0});
  store.value(mlp_out_.bias_name()).fill(T{0});
}

void S2FairConv::check_input(const Dims4& d) const {
  if (d.c != config_.channels || d.b != config_.bands) {
    throw ConfigError("s2fairconv '" + prefix_ + "': expected (" +
                      std::to_string(config_.channels) + "," + std::to_string(config_.bands) +
                      ",H,W), got " + d.shape().to_string());
  }
}

template <typename T>
Var S2FairConv::mrfe(Tape<T>& tape, Var x) const {
  const Dims4 d = dims4(tape.value(x).shape(), "s2fairconv input");
  check_input(d);
  const std::size_t q = config_.quarter();

  const Var d0 = spatial_.forward(tape, slice_channels(tape, x, 0, q));
  const Var d1 = spectral_.forward(tape, slice_channels(tape, x, q, 2 * q));

  const Var x2 = slice_channels(tape, x, 2 * q, 3 * q);
  Var z = swap_channel_band(tape, spatial_mean(tape, x2));  // (B, q, 1, 1)
  z = relu(tape, band_down_.forward(tape, z));
  z = swap_channel_band(tape, band_up_.forward(tape, z));  // (q, B, 1, 1)
  const Var gate = broadcast_spatial(tape, sigmoid(tape, z), d.h, d.w);
  const Var d2 = sub(tape, scale(tape, mul(tape, x2, gate), T{2}), x2);

  const Var rest = tape.input(Tensor<T>(Shape{d.c - 3 * q, d.b, d.h, d.w}));
  const Var parts[] = {d0, d1, d2, rest};
  return add(tape, x, concat_channels<T>(tape, parts));
}

template <typename T>
typename S2FairConv::RefineTrace S2FairConv::spfr_trace(Tape<T>& tape, Var x) const {
  const Dims4 d = dims4(tape.value(x).shape(), "s2fairconv input");
  check_input(d);
  const std::size_t a = config_.active_channels();
  RefineTrace tr;
  tr.active = slice_channels(tape, x, 0, a);
  tr.passive = slice_channels(tape, x, a, d.c);
  tr.conv = active_conv_.forward(tape, tr.active);
  const Var parts[] = {tr.conv, tr.passive};
  tr.concat = concat_channels<T>(tape, parts);
  tr.out = mlp_out_.forward(tape, relu(tape, mlp_in_.forward(tape, tr.concat)));
  return tr;
}

template <typename T>
Var S2FairConv::spfr(Tape<T>& tape, Var x) const {
  return spfr_trace(tape, x).out;
}

template <typename T>
Var S2FairConv::forward(Tape<T>& tape, Var x) const {
  return spfr(tape, mrfe(tape, x));
}

std::size_t S2FairConv::param_count() const {
  std::size_t n = 0;
  for (const auto* c : {&spatial_, &spectral_, &band_down_, &band_up_, &active_conv_, &mlp_in_,
                        &mlp_out_}) {
    n += c->param_count();
  }
  return n;
}

nn::Cost S2FairConv::mrfe_cost(const Dims4& in) const {
  const std::size_t q = config_.quarter();
  Dims4 dq = in;
  dq.c = q;
  nn::Cost c;
  c += spatial_.cost(dq);
  c += spectral_.cost(dq);
  c.flops += dq.numel();  // spatial mean
  const Dims4 pooled{in.b, q, 1, 1};
  Dims4 hidden;
  c += band_down_.cost(pooled, &hidden);
  c.flops += hidden.numel();  // relu
  c += band_up_.cost(hidden);
  c.flops += q * in.b;          // sigmoid
  c.flops += 3 * dq.numel();    // mul, scale, sub
  c.flops += in.numel();        // residual add
  return c;
}

nn::Cost S2FairConv::spfr_cost(const Dims4& in) const {
  Dims4 da = in;
  da.c = config_.active_channels();
  nn::Cost c;
  c += active_conv_.cost(da);
  Dims4 hidden;
  c += mlp_in_.cost(in, &hidden);
  c.flops += hidden.numel();  // relu
  c += mlp_out_.cost(hidden);
  return c;
}

nn::Cost S2FairConv::cost(const Dims4& in) const {
  nn::Cost c = mrfe_cost(in);
  c += spfr_cost(in);
  return c;
}

#define FAIRHYP_INSTANTIATE(T)                                                             \
  template void S2FairConv::init<T>(ParamStore<T>&) const;                                 \
  template void S2FairConv::set_identity<T>(ParamStore<T>&) const;                         \
  template void S2FairConv::zero_path<T>(ParamStore<T>&, int) const;                       \
  template Var S2FairConv::mrfe<T>(Tape<T>&, Var) const;                                   \
  template S2FairConv::RefineTrace S2FairConv::spfr_trace<T>(Tape<T>&, Var) const;         \
  template Var S2FairConv::spfr<T>(Tape<T>&, Var) const;                                   \
  template Var S2FairConv::forward<T>(Tape<T>&, Var) const;

FAIRHYP_INSTANTIATE(float)
FAIRHYP_INSTANTIATE(double)

#undef FAIRHYP_INSTANTIATE

}  // namespace fairhyp
