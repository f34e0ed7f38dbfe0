#include "fairhyp/rk4sva.hpp"

#include "fairhyp/ops.hpp"

namespace fairhyp {

void Rk4SvaConfig::validate() const {
  if (bands == 0) throw ConfigError("rk4sva: bands must be >= 1");
  if (ref_channels == 0) throw ConfigError("rk4sva: ref_channels must be >= 1");
  if (gate_layers == 0) throw ConfigError("rk4sva: gate_layers must be >= 1");
  if (kernel_h % 2 == 0 || kernel_w % 2 == 0) {
    throw ConfigError("rk4sva: stage kernels must be odd for symmetric same padding");
  }
}

Rk4Sva::Rk4Sva(std::string prefix, Rk4SvaConfig config)
    : prefix_(std::move(prefix)), config_(config) {
  config_.validate();
  const std::size_t B = config_.bands;
  const ConvSpec k = nn::spatial_kernel(config_.kernel_h, config_.kernel_w);
  for (int t = 0; t < 4; ++t) {
    const std::string base = prefix_ + ".f" + std::to_string(t + 1);
    stages_[t][0] = nn::Conv(base + ".conv_a", B, B, k);
    stages_[t][1] = nn::Conv(base + ".conv_b", B, B, k);
  }
  ref_ = nn::Conv(prefix_ + ".ref", B, config_.ref_channels, nn::pointwise());
  for (std::size_t i = 0; i < config_.gate_layers; ++i) {
    const std::size_t in = i == 0 ? B + config_.ref_channels : B;
    gate_.emplace_back(prefix_ + ".gate" + std::to_string(i), in, B, nn::spatial_kernel(3, 3));
  }
  refine_ = nn::Conv(prefix_ + ".refine", B, B, nn::pointwise());
}

std::string Rk4Sva::step_name(int stage) const { return prefix_ + ".h" + std::to_string(stage); }

template <typename T>
void Rk4Sva::init(ParamStore<T>& store) const {
  for (const auto& s : stages_)
    for (const auto& c : s) c.init(store);
  ref_.init(store);
  for (const auto& g : gate_) g.init(store);
  refine_.init(store);
  refine_.set_identity(store);  // start as a pass-through of the modulated cube
  for (int t = 2; t <= 4; ++t) store.add(step_name(t), Shape{1}, Init::constant(config_.init_h));
}

template <typename T>
void Rk4Sva::set_identity(ParamStore<T>& store) const {
  for (const auto& s : stages_)
    for (const auto& c : s) c.zero(store);
  ref_.zero(store);
  for (const auto& g : gate_) g.zero(store);
  refine_.set_identity(store);
  for (int t = 2; t <= 4; ++t) store.value(step_name(t)).fill(static_cast<T>(config_.init_h));
}

template <typename T>
Var Rk4Sva::stage(Tape<T>& tape, int t, Var x) const {
  const auto& s = stages_[t - 1];
  Var y = s[0].forward(tape, x);
  y = leaky_relu(tape, y, static_cast<T>(config_.leaky_slope));
  return s[1].forward(tape, y);
}

template <typename T>
typename Rk4Sva::Trace Rk4Sva::forward_trace(Tape<T>& tape, Var x) const {
  const Dims4 d = dims4(tape.value(x).shape(), "rk4sva input");
  if (d.c != config_.bands || d.b != 1) {
    throw ConfigError("rk4sva: expected input (" + std::to_string(config_.bands) +
                      ",1,H,W), got " + d.shape().to_string());
  }
  Trace tr;
  const Var h2 = tape.param(step_name(2));
  const Var h3 = tape.param(step_name(3));
  const Var h4 = tape.param(step_name(4));
  const T half = static_cast<T>(0.5);

  tr.k[0] = stage(tape, 1, x);
  tr.k[1] = stage(tape, 2, add(tape, x, scale(tape, scale_by(tape, tr.k[0], h2), half)));
  tr.k[2] = stage(tape, 3, add(tape, x, scale(tape, scale_by(tape, tr.k[1], h3), half)));
  tr.k[3] = stage(tape, 4, add(tape, x, scale_by(tape, tr.k[2], h4)));

  Var acc = add(tape, tr.k[0], scale(tape, tr.k[1], T{2}));
  acc = add(tape, acc, scale(tape, tr.k[2], T{2}));
  acc = add(tape, acc, tr.k[3]);
  tr.y_hat = add(tape, x, scale(tape, acc, T{1} / T{6}));

  tr.ref = ref_.forward(tape, x);
  const Var parts[] = {tr.y_hat, tr.ref};
  Var g = concat_channels<T>(tape, parts);
  for (std::size_t i = 0; i < gate_.size(); ++i) {
    if (i > 0) g = leaky_relu(tape, g, static_cast<T>(config_.leaky_slope));
    g = gate_[i].forward(tape, g);
  }
  tr.alpha = sigmoid(tape, g);
  tr.y_tilde = add(tape, tr.y_hat, mul(tape, tr.y_hat, tr.alpha));
  tr.out = refine_.forward(tape, tr.y_tilde);
  return tr;
}

template <typename T>
Var Rk4Sva::forward(Tape<T>& tape, Var x) const {
  return forward_trace(tape, x).out;
}

template <typename T>
Tensor<T> Rk4Sva::apply(const ParamStore<T>& store, const Tensor<T>& cube) const {
  if (cube.shape().rank() != 3) {
    throw ConfigError("rk4sva: expected a (B,H,W) cube, got " + cube.shape().to_string());
  }
  Tape<T> tape(&store);
  const Shape s = cube.shape();
  const Var x = tape.input(cube.reshaped(Shape{s[0], 1, s[1], s[2]}));
  return tape.value(forward(tape, x)).reshaped(s);
}

std::size_t Rk4Sva::param_count() const {
  std::size_t n = 3;  // h2, h3, h4
  for (const auto& s : stages_)
    for (const auto& c : s) n += c.param_count();
  n += ref_.param_count() + refine_.param_count();
  for (const auto& g : gate_) n += g.param_count();
  return n;
}

nn::Cost Rk4Sva::cost(const Dims4& in) const {
  const std::uint64_t n = in.numel();
  nn::Cost c;
  for (const auto& s : stages_) {
    c += s[0].cost(in);
    c.flops += n;  // leaky relu
    c += s[1].cost(in);
  }
  // Stage inputs: scale_by + scale + add for k2 and k3, scale_by + add for k4.
  c.flops += 3 * n + 3 * n + 2 * n;
  // Combination: two doublings, three adds, one scale, one add.
  c.flops += 7 * n;
  Dims4 ref_out;
  c += ref_.cost(in, &ref_out);
  Dims4 gin = in;
  gin.c += ref_out.c;
  for (std::size_t i = 0; i < gate_.size(); ++i) {
    if (i > 0) c.flops += gin.numel();
    c += gate_[i].cost(gin, &gin);
  }
  c.flops += 3 * n;  // sigmoid, mul, add
  c += refine_.cost(in);
  c.params += 3;
  return c;
}

#define FAIRHYP_INSTANTIATE(T)                                                        \
  template void Rk4Sva::init<T>(ParamStore<T>&) const;                                \
  template void Rk4Sva::set_identity<T>(ParamStore<T>&) const;                        \
  template Var Rk4Sva::forward<T>(Tape<T>&, Var) const;                               \
  template Rk4Sva::Trace Rk4Sva::forward_trace<T>(Tape<T>&, Var) const;               \
  template Tensor<T> Rk4Sva::apply<T>(const ParamStore<T>&, const Tensor<T>&) const;

FAIRHYP_INSTANTIATE(float)
FAIRHYP_INSTANTIATE(double)

#undef FAIRHYP_INSTANTIATE

}  // namespace fairhyp
