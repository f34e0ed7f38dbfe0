#include "fairhyp/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "fairhyp/errors.hpp"

namespace fairhyp {

namespace {

template <typename T>
void require_same_shape(const Tape<T>& t, Var a, Var b, const char* op) {
  if (!(t.value(a).shape() == t.value(b).shape())) {
    throw ConfigError(std::string(op) + ": shape mismatch " + t.value(a).shape().to_string() +
                      " vs " + t.value(b).shape().to_string());
  }
}

// Applies f elementwise and records df/da evaluated from (a, y).
template <typename T, typename F, typename D>
Var unary(Tape<T>& t, Var a, const char* op, F f, D dfda) {
  const Tensor<T>& av = t.value(a);
  Tensor<T> y(av.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = f(av[i]);
  const std::uint64_t n = y.size();
  Var out{t.size()};
  return t.record(
      op, std::move(y), {a},
      [a, out, dfda](Tape<T>& tp, const Tensor<T>& g) {
        if (!tp.requires_grad(a)) return;
        const Tensor<T>& x = tp.value(a);
        const Tensor<T>& yv = tp.value(out);
        auto& ga = tp.grad_slot(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * dfda(x[i], yv[i]);
      },
      n);
}

template <typename T>
T stable_softplus(T x) {
  return x > T{0} ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

template <typename T>
T stable_sigmoid(T x) {
  if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
  const T e = std::exp(x);
  return e / (T{1} + e);
}

}  // namespace

template <typename T>
Var add(Tape<T>& t, Var a, Var b) {
  require_same_shape(t, a, b, "add");
  const auto& av = t.value(a);
  const auto& bv = t.value(b);
  Tensor<T> y(av.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] + bv[i];
  const std::uint64_t n = y.size();
  return t.record(
      "add", std::move(y), {a, b},
      [a, b](Tape<T>& tp, const Tensor<T>& g) {
        for (Var v : {a, b}) {
          if (!tp.requires_grad(v)) continue;
          auto& gv = tp.grad_slot(v);
          for (std::size_t i = 0; i < g.size(); ++i) gv[i] += g[i];
        }
      },
      n);
}

template <typename T>
Var sub(Tape<T>& t, Var a, Var b) {
  require_same_shape(t, a, b, "sub");
  const auto& av = t.value(a);
  const auto& bv = t.value(b);
  Tensor<T> y(av.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] - bv[i];
  const std::uint64_t n = y.size();
  return t.record(
      "sub", std::move(y), {a, b},
      [a, b](Tape<T>& tp, const Tensor<T>& g) {
        if (tp.requires_grad(a)) {
          auto& ga = tp.grad_slot(a);
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (tp.requires_grad(b)) {
          auto& gb = tp.grad_slot(b);
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        }
      },
      n);
}

template <typename T>
Var mul(Tape<T>& t, Var a, Var b) {
  require_same_shape(t, a, b, "mul");
  const auto& av = t.value(a);
  const auto& bv = t.value(b);
  Tensor<T> y(av.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] * bv[i];
  const std::uint64_t n = y.size();
  return t.record(
      "mul", std::move(y), {a, b},
      [a, b](Tape<T>& tp, const Tensor<T>& g) {
        if (tp.requires_grad(a)) {
          const auto& bv = tp.value(b);
          auto& ga = tp.grad_slot(a);
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
        }
        if (tp.requires_grad(b)) {
          const auto& av = tp.value(a);
          auto& gb = tp.grad_slot(b);
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
        }
      },
      n);
}

template <typename T>
Var scale(Tape<T>& t, Var a, T c) {
  const auto& av = t.value(a);
  Tensor<T> y(av.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = c * av[i];
  const std::uint64_t n = y.size();
  return t.record(
      "scale", std::move(y), {a},
      [a, c](Tape<T>& tp, const Tensor<T>& g) {
        if (!tp.requires_grad(a)) return;
        auto& ga = tp.grad_slot(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
      },
      n);
}

template <typename T>
Var scale_by(Tape<T>& t, Var a, Var s) {
  if (t.value(s).size() != 1) {
    throw ConfigError("scale_by: scale must hold one element, got " +
                      t.value(s).shape().to_string());
  }
  const auto& av = t.value(a);
  const T c = t.value(s)[0];
  Tensor<T> y(av.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = c * av[i];
  const std::uint64_t n = y.size();
  return t.record(
      "scale_by", std::move(y), {a, s},
      [a, s](Tape<T>& tp, const Tensor<T>& g) {
        const auto& av = tp.value(a);
        if (tp.requires_grad(a)) {
          const T c = tp.value(s)[0];
          auto& ga = tp.grad_slot(a);
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
        }
        if (tp.requires_grad(s)) {
          T acc{0};
          for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * av[i];
          tp.grad_slot(s)[0] += acc;
        }
      },
      n);
}

template <typename T>
Var leaky_relu(Tape<T>& t, Var a, T slope) {
  return unary(
      t, a, "leaky_relu", [slope](T x) { return x > T{0} ? x : slope * x; },
      [slope](T x, T) { return x > T{0} ? T{1} : slope; });
}

template <typename T>
Var relu(Tape<T>& t, Var a) {
  return unary(
      t, a, "relu", [](T x) { return x > T{0} ? x : T{0}; },
      [](T x, T) { return x > T{0} ? T{1} : T{0}; });
}

template <typename T>
Var sigmoid(Tape<T>& t, Var a) {
  return unary(
      t, a, "sigmoid", [](T x) { return stable_sigmoid(x); },
      [](T, T y) { return y * (T{1} - y); });
}

template <typename T>
Var softplus(Tape<T>& t, Var a) {
  return unary(
      t, a, "softplus", [](T x) { return stable_softplus(x); },
      [](T x, T) { return stable_sigmoid(x); });
}

template <typename T>
Var exponential(Tape<T>& t, Var a) {
  return unary(
      t, a, "exp", [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <typename T>
Var reshape(Tape<T>& t, Var a, Shape shape) {
  Tensor<T> y = t.value(a).reshaped(shape);
  return t.record("reshape", std::move(y), {a}, [a](Tape<T>& tp, const Tensor<T>& g) {
    if (!tp.requires_grad(a)) return;
    auto& ga = tp.grad_slot(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

template <typename T>
Var concat_channels(Tape<T>& t, std::span<const Var> parts) {
  if (parts.empty()) throw ConfigError("concat_channels: no inputs");
  const Dims4 d0 = dims4(t.value(parts[0]).shape(), "concat input");
  std::size_t channels = 0;
  for (Var p : parts) {
    const Dims4 d = dims4(t.value(p).shape(), "concat input");
    if (d.b != d0.b || d.h != d0.h || d.w != d0.w) {
      throw ConfigError("concat_channels: mismatched (B,H,W) " + d.shape().to_string() + " vs " +
                        d0.shape().to_string());
    }
    channels += d.c;
  }
  Tensor<T> y(Shape{channels, d0.b, d0.h, d0.w});
  std::size_t offset = 0;
  for (Var p : parts) {
    const auto& v = t.value(p);
    std::copy(v.data().begin(), v.data().end(), y.data().begin() + offset);
    offset += v.size();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return t.record("concat_channels", std::move(y), inputs,
                  [inputs](Tape<T>& tp, const Tensor<T>& g) {
                    std::size_t off = 0;
                    for (Var p : inputs) {
                      const std::size_t n = tp.value(p).size();
                      if (tp.requires_grad(p)) {
                        auto& gp = tp.grad_slot(p);
                        for (std::size_t i = 0; i < n; ++i) gp[i] += g[off + i];
                      }
                      off += n;
                    }
                  });
}

template <typename T>
Var slice_channels(Tape<T>& t, Var a, std::size_t begin, std::size_t end) {
  const Dims4 d = dims4(t.value(a).shape(), "slice input");
  if (begin >= end || end > d.c) {
    throw ConfigError("slice_channels: range [" + std::to_string(begin) + "," +
                      std::to_string(end) + ") invalid for " + std::to_string(d.c) + " channels");
  }
  const std::size_t per = d.b * d.h * d.w;
  const auto& av = t.value(a);
  Tensor<T> y(Shape{end - begin, d.b, d.h, d.w});
  std::copy_n(av.data().begin() + begin * per, y.size(), y.data().begin());
  return t.record("slice_channels", std::move(y), {a},
                  [a, begin, per](Tape<T>& tp, const Tensor<T>& g) {
                    if (!tp.requires_grad(a)) return;
                    auto& ga = tp.grad_slot(a);
                    for (std::size_t i = 0; i < g.size(); ++i) ga[begin * per + i] += g[i];
                  });
}

template <typename T>
Var swap_channel_band(Tape<T>& t, Var a) {
  const Dims4 d = dims4(t.value(a).shape(), "swap input");
  const auto& av = t.value(a);
  Tensor<T> y(Shape{d.b, d.c, d.h, d.w});
  const std::size_t p = d.plane();
  for (std::size_t c = 0; c < d.c; ++c)
    for (std::size_t b = 0; b < d.b; ++b)
      std::copy_n(av.data().begin() + (c * d.b + b) * p, p, y.data().begin() + (b * d.c + c) * p);
  return t.record("swap_channel_band", std::move(y), {a},
                  [a, d, p](Tape<T>& tp, const Tensor<T>& g) {
                    if (!tp.requires_grad(a)) return;
                    auto& ga = tp.grad_slot(a);
                    for (std::size_t c = 0; c < d.c; ++c)
                      for (std::size_t b = 0; b < d.b; ++b)
                        for (std::size_t i = 0; i < p; ++i)
                          ga[(c * d.b + b) * p + i] += g[(b * d.c + c) * p + i];
                  });
}

template <typename T>
Var flip_bands(Tape<T>& t, Var a) {
  const Dims4 d = dims4(t.value(a).shape(), "flip input");
  const auto& av = t.value(a);
  Tensor<T> y(av.shape());
  const std::size_t p = d.plane();
  for (std::size_t c = 0; c < d.c; ++c)
    for (std::size_t b = 0; b < d.b; ++b)
      std::copy_n(av.data().begin() + (c * d.b + b) * p, p,
                  y.data().begin() + (c * d.b + (d.b - 1 - b)) * p);
  return t.record("flip_bands", std::move(y), {a}, [a, d, p](Tape<T>& tp, const Tensor<T>& g) {
    if (!tp.requires_grad(a)) return;
    auto& ga = tp.grad_slot(a);
    for (std::size_t c = 0; c < d.c; ++c)
      for (std::size_t b = 0; b < d.b; ++b)
        for (std::size_t i = 0; i < p; ++i)
          ga[(c * d.b + b) * p + i] += g[(c * d.b + (d.b - 1 - b)) * p + i];
  });
}

template <typename T>
Var broadcast_spatial(Tape<T>& t, Var a, std::size_t h, std::size_t w) {
  const Dims4 d = dims4(t.value(a).shape(), "broadcast input");
  if (d.h != 1 || d.w != 1) {
    throw ConfigError("broadcast_spatial: expected (C,B,1,1), got " + d.shape().to_string());
  }
  const auto& av = t.value(a);
  Tensor<T> y(Shape{d.c, d.b, h, w});
  const std::size_t p = h * w;
  for (std::size_t i = 0; i < av.size(); ++i)
    std::fill_n(y.data().begin() + i * p, p, av[i]);
  return t.record("broadcast_spatial", std::move(y), {a}, [a, p](Tape<T>& tp, const Tensor<T>& g) {
    if (!tp.requires_grad(a)) return;
    auto& ga = tp.grad_slot(a);
    for (std::size_t i = 0; i < ga.size(); ++i) {
      T acc{0};
      for (std::size_t k = 0; k < p; ++k) acc += g[i * p + k];
      ga[i] += acc;
    }
  });
}

template <typename T>
Var upsample_nearest(Tape<T>& t, Var a, std::size_t h, std::size_t w) {
  const Dims4 d = dims4(t.value(a).shape(), "upsample input");
  if (h > 2 * d.h || w > 2 * d.w) {
    throw ConfigError("upsample_nearest: target " + std::to_string(h) + "x" + std::to_string(w) +
                      " exceeds 2x of " + std::to_string(d.h) + "x" + std::to_string(d.w));
  }
  const auto& av = t.value(a);
  Tensor<T> y(Shape{d.c, d.b, h, w});
  const std::size_t planes = d.c * d.b;
  for (std::size_t pl = 0; pl < planes; ++pl)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j)
        y[(pl * h + i) * w + j] = av[(pl * d.h + i / 2) * d.w + j / 2];
  return t.record("upsample_nearest", std::move(y), {a},
                  [a, d, h, w, planes](Tape<T>& tp, const Tensor<T>& g) {
                    if (!tp.requires_grad(a)) return;
                    auto& ga = tp.grad_slot(a);
                    for (std::size_t pl = 0; pl < planes; ++pl)
                      for (std::size_t i = 0; i < h; ++i)
                        for (std::size_t j = 0; j < w; ++j)
                          ga[(pl * d.h + i / 2) * d.w + j / 2] += g[(pl * h + i) * w + j];
                  });
}

template <typename T>
Var conv3d(Tape<T>& t, Var x, Var weight, std::optional<Var> bias, const ConvSpec& spec,
           std::string_view name) {
  const Dims4 in = dims4(t.value(x).shape(), "conv input");
  const ConvGeometry g = conv_geometry(in, t.value(weight).shape(), spec, name);
  if (bias && t.value(*bias).size() != g.out.c) {
    throw ConfigError("conv '" + std::string(name) + "': bias '" + std::string(name) +
                      ".bias' has " + std::to_string(t.value(*bias).size()) +
                      " elements, expected " + std::to_string(g.out.c));
  }
  Tensor<T> y(g.out.shape());
  std::span<const T> bspan;
  if (bias) bspan = t.value(*bias).data();
  conv3d_forward<T>(g, spec, t.value(x).data(), t.value(weight).data(), bspan, y.data());
  const std::uint64_t flops = conv_flops(in, g.out.c, spec, bias.has_value());
  std::vector<Var> inputs{x, weight};
  if (bias) inputs.push_back(*bias);
  return t.record(
      "conv3d", std::move(y), inputs,
      [x, weight, bias, g, spec](Tape<T>& tp, const Tensor<T>& gy) {
        if (tp.requires_grad(x)) {
          conv3d_backward_input<T>(g, spec, gy.data(), tp.value(weight).data(),
                                   tp.grad_slot(x).data());
        }
        if (tp.requires_grad(weight)) {
          conv3d_backward_weight<T>(g, spec, gy.data(), tp.value(x).data(),
                                    tp.grad_slot(weight).data());
        }
        if (bias && tp.requires_grad(*bias)) {
          auto& gb = tp.grad_slot(*bias);
          const std::size_t plane = g.out.b * g.out.h * g.out.w;
          for (std::size_t co = 0; co < g.out.c; ++co) {
            T acc{0};
            for (std::size_t i = 0; i < plane; ++i) acc += gy[co * plane + i];
            gb[co] += acc;
          }
        }
      },
      flops);
}

namespace {

// Per-plane summaries in an order that depends only on the multiset of values.
template <typename T>
struct PlaneStats {
  T mean, max, min, var;
  std::size_t argmax, argmin;
};

template <typename T>
PlaneStats<T> plane_stats(const T* p, std::size_t n, std::vector<T>& scratch) {
  scratch.assign(p, p + n);
  std::sort(scratch.begin(), scratch.end());
  T total{0};
  for (T v : scratch) total += v;
  PlaneStats<T> s;
  s.mean = total / static_cast<T>(n);
  s.min = scratch.front();
  s.max = scratch.back();
  T sq{0};
  for (T v : scratch) {
    const T dv = v - s.mean;
    sq += dv * dv;
  }
  s.var = sq / static_cast<T>(n);
  s.argmax = static_cast<std::size_t>(std::find(p, p + n, s.max) - p);
  s.argmin = static_cast<std::size_t>(std::find(p, p + n, s.min) - p);
  return s;
}

}  // namespace

template <typename T>
StatVars spatial_stats(Tape<T>& t, Var x) {
  const Dims4 d = dims4(t.value(x).shape(), "stats input");
  const auto& xv = t.value(x);
  const std::size_t planes = d.c * d.b;
  const std::size_t n = d.plane();
  const Shape out_shape{d.c, d.b, 1, 1};
  Tensor<T> mean(out_shape), mx(out_shape), mn(out_shape), var(out_shape);
  std::vector<std::size_t> argmax(planes), argmin(planes);
  std::vector<T> scratch;
  for (std::size_t pl = 0; pl < planes; ++pl) {
    const PlaneStats<T> s = plane_stats(xv.data().data() + pl * n, n, scratch);
    mean[pl] = s.mean;
    mx[pl] = s.max;
    mn[pl] = s.min;
    var[pl] = s.var;
    argmax[pl] = s.argmax;
    argmin[pl] = s.argmin;
  }
  const std::uint64_t elems = xv.size();

  StatVars out;
  out.mean = t.record(
      "spatial_mean_stat", std::move(mean), {x},
      [x, n](Tape<T>& tp, const Tensor<T>& g) {
        if (!tp.requires_grad(x)) return;
        auto& gx = tp.grad_slot(x);
        const T inv = T{1} / static_cast<T>(n);
        for (std::size_t pl = 0; pl < g.size(); ++pl)
          for (std::size_t i = 0; i < n; ++i) gx[pl * n + i] += g[pl] * inv;
      },
      elems);
  out.max = t.record(
      "spatial_max", std::move(mx), {x},
      [x, n, argmax](Tape<T>& tp, const Tensor<T>& g) {
        if (!tp.requires_grad(x)) return;
        auto& gx = tp.grad_slot(x);
        for (std::size_t pl = 0; pl < g.size(); ++pl) gx[pl * n + argmax[pl]] += g[pl];
      },
      elems);
  out.min = t.record(
      "spatial_min", std::move(mn), {x},
      [x, n, argmin](Tape<T>& tp, const Tensor<T>& g) {
        if (!tp.requires_grad(x)) return;
        auto& gx = tp.grad_slot(x);
        for (std::size_t pl = 0; pl < g.size(); ++pl) gx[pl * n + argmin[pl]] += g[pl];
      },
      elems);
  const Var mean_var = out.mean;
  out.var = t.record(
      "spatial_var", std::move(var), {x},
      [x, n, mean_var](Tape<T>& tp, const Tensor<T>& g) {
        if (!tp.requires_grad(x)) return;
        const auto& xv = tp.value(x);
        const auto& mu = tp.value(mean_var);
        auto& gx = tp.grad_slot(x);
        const T k = T{2} / static_cast<T>(n);
        for (std::size_t pl = 0; pl < g.size(); ++pl)
          for (std::size_t i = 0; i < n; ++i)
            gx[pl * n + i] += g[pl] * k * (xv[pl * n + i] - mu[pl]);
      },
      3 * elems);
  return out;
}

template <typename T>
SpatialStats<T> reduce_stats(const Tensor<T>& x) {
  const Dims4 d = dims4(x.shape(), "reduce_stats input");
  const Shape out_shape{d.c, d.b};
  SpatialStats<T> s{Tensor<T>(out_shape), Tensor<T>(out_shape), Tensor<T>(out_shape),
                    Tensor<T>(out_shape)};
  std::vector<T> scratch;
  const std::size_t n = d.plane();
  for (std::size_t pl = 0; pl < d.c * d.b; ++pl) {
    const PlaneStats<T> p = plane_stats(x.data().data() + pl * n, n, scratch);
    s.mean[pl] = p.mean;
    s.max[pl] = p.max;
    s.min[pl] = p.min;
    s.var[pl] = p.var;
  }
  return s;
}

template <typename T>
Var spatial_mean(Tape<T>& t, Var x) {
  const Dims4 d = dims4(t.value(x).shape(), "mean input");
  const auto& xv = t.value(x);
  const std::size_t n = d.plane();
  Tensor<T> y(Shape{d.c, d.b, 1, 1});
  for (std::size_t pl = 0; pl < d.c * d.b; ++pl) {
    T acc{0};
    for (std::size_t i = 0; i < n; ++i) acc += xv[pl * n + i];
    y[pl] = acc / static_cast<T>(n);
  }
  const std::uint64_t elems = xv.size();
  return t.record(
      "spatial_mean", std::move(y), {x},
      [x, n](Tape<T>& tp, const Tensor<T>& g) {
        if (!tp.requires_grad(x)) return;
        auto& gx = tp.grad_slot(x);
        const T inv = T{1} / static_cast<T>(n);
        for (std::size_t pl = 0; pl < g.size(); ++pl)
          for (std::size_t i = 0; i < n; ++i) gx[pl * n + i] += g[pl] * inv;
      },
      elems);
}

template <typename T>
Var sum(Tape<T>& t, Var a) {
  const auto& av = t.value(a);
  T acc{0};
  for (T v : av.data()) acc += v;
  return t.record(
      "sum", Tensor<T>(Shape{1}, {acc}), {a},
      [a](Tape<T>& tp, const Tensor<T>& g) {
        if (!tp.requires_grad(a)) return;
        auto& ga = tp.grad_slot(a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0];
      },
      av.size());
}

template <typename T>
Var weighted_sum(Tape<T>& t, Var a, const Tensor<T>& weights) {
  const auto& av = t.value(a);
  if (av.size() != weights.size()) {
    throw ConfigError("weighted_sum: " + av.shape().to_string() + " vs weights " +
                      weights.shape().to_string());
  }
  T acc{0};
  for (std::size_t i = 0; i < av.size(); ++i) acc += av[i] * weights[i];
  return t.record(
      "weighted_sum", Tensor<T>(Shape{1}, {acc}), {a},
      [a, weights](Tape<T>& tp, const Tensor<T>& g) {
        if (!tp.requires_grad(a)) return;
        auto& ga = tp.grad_slot(a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0] * weights[i];
      },
      2 * av.size());
}

template <typename T>
Var mse(Tape<T>& t, Var a, const Tensor<T>& target) {
  const auto& av = t.value(a);
  if (!(av.shape() == target.shape())) {
    throw ConfigError("mse: prediction " + av.shape().to_string() + " vs target " +
                      target.shape().to_string());
  }
  T acc{0};
  for (std::size_t i = 0; i < av.size(); ++i) {
    const T d = av[i] - target[i];
    acc += d * d;
  }
  const T n = static_cast<T>(av.size());
  return t.record(
      "mse", Tensor<T>(Shape{1}, {acc / n}), {a},
      [a, target, n](Tape<T>& tp, const Tensor<T>& g) {
        if (!tp.requires_grad(a)) return;
        const auto& av = tp.value(a);
        auto& ga = tp.grad_slot(a);
        const T k = T{2} * g[0] / n;
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += k * (av[i] - target[i]);
      },
      3 * av.size());
}

template <typename T>
Var softmax_cross_entropy(Tape<T>& t, Var logits, std::size_t label) {
  const auto& z = t.value(logits);
  if (label >= z.size()) {
    throw ConfigError("softmax_cross_entropy: label " + std::to_string(label) +
                      " out of range for " + std::to_string(z.size()) + " classes");
  }
  const T zmax = *std::max_element(z.data().begin(), z.data().end());
  T denom{0};
  for (T v : z.data()) denom += std::exp(v - zmax);
  const T loss = std::log(denom) + zmax - z[label];
  return t.record(
      "softmax_cross_entropy", Tensor<T>(Shape{1}, {loss}), {logits},
      [logits, label](Tape<T>& tp, const Tensor<T>& g) {
        if (!tp.requires_grad(logits)) return;
        const auto& z = tp.value(logits);
        const T zmax = *std::max_element(z.data().begin(), z.data().end());
        T denom{0};
        for (T v : z.data()) denom += std::exp(v - zmax);
        auto& gz = tp.grad_slot(logits);
        for (std::size_t i = 0; i < z.size(); ++i) {
          const T p = std::exp(z[i] - zmax) / denom;
          gz[i] += g[0] * (p - (i == label ? T{1} : T{0}));
        }
      },
      4 * z.size());
}

#define FAIRHYP_INSTANTIATE(T)                                                                \
  template Var add<T>(Tape<T>&, Var, Var);                                                    \
  template Var sub<T>(Tape<T>&, Var, Var);                                                    \
  template Var mul<T>(Tape<T>&, Var, Var);                                                    \
  template Var scale<T>(Tape<T>&, Var, T);                                                    \
  template Var scale_by<T>(Tape<T>&, Var, Var);                                               \
  template Var leaky_relu<T>(Tape<T>&, Var, T);                                               \
  template Var relu<T>(Tape<T>&, Var);                                                        \
  template Var sigmoid<T>(Tape<T>&, Var);                                                     \
  template Var softplus<T>(Tape<T>&, Var);                                                    \
  template Var exponential<T>(Tape<T>&, Var);                                                 \
  template Var reshape<T>(Tape<T>&, Var, Shape);                                              \
  template Var concat_channels<T>(Tape<T>&, std::span<const Var>);                            \
  template Var slice_channels<T>(Tape<T>&, Var, std::size_t, std::size_t);                    \
  template Var swap_channel_band<T>(Tape<T>&, Var);                                           \
  template Var flip_bands<T>(Tape<T>&, Var);                                                  \
  template Var broadcast_spatial<T>(Tape<T>&, Var, std::size_t, std::size_t);                 \
  template Var upsample_nearest<T>(Tape<T>&, Var, std::size_t, std::size_t);                  \
  template Var conv3d<T>(Tape<T>&, Var, Var, std::optional<Var>, const ConvSpec&,             \
                         std::string_view);                                                   \
  template StatVars spatial_stats<T>(Tape<T>&, Var);                                          \
  template Var spatial_mean<T>(Tape<T>&, Var);                                                \
  template Var sum<T>(Tape<T>&, Var);                                                         \
  template Var weighted_sum<T>(Tape<T>&, Var, const Tensor<T>&);                              \
  template Var mse<T>(Tape<T>&, Var, const Tensor<T>&);                                       \
  template Var softmax_cross_entropy<T>(Tape<T>&, Var, std::size_t);                          \
  template SpatialStats<T> reduce_stats<T>(const Tensor<T>&);

FAIRHYP_INSTANTIATE(float)
FAIRHYP_INSTANTIATE(double)

#undef FAIRHYP_INSTANTIATE

}  // namespace fairhyp
