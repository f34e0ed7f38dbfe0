#include "fairhyp/conv.hpp"

#include <algorithm>
#include <string>

#include "fairhyp/errors.hpp"

namespace fairhyp {

namespace {

using Index = std::ptrdiff_t;

struct Range {
  Index lo, hi;  // [lo, hi)
};

// Output positions o in [0, n_out) with o*stride + k - pad inside [0, n_in).
Range valid_range(Index n_in, Index n_out, Index stride, Index k, Index pad) {
  Index lo = 0;
  if (pad > k) lo = (pad - k + stride - 1) / stride;
  Index top = n_in - 1 + pad - k;
  Index hi = top < 0 ? 0 : top / stride + 1;
  hi = std::min(hi, n_out);
  return {lo, std::max(lo, hi)};
}

std::size_t same_pad(std::size_t k) { return k / 2; }

std::size_t out_extent(std::size_t n, std::size_t k, std::size_t stride, std::size_t pad) {
  const Index span = static_cast<Index>(n + 2 * pad) - static_cast<Index>(k);
  if (span < 0) return 0;
  return static_cast<std::size_t>(span) / stride + 1;
}

// Shared loop nest: for every (co, ci, kernel tap) visits the valid rows of the
// output plane, handing the caller row pointers and a weight index.
template <typename Fn>
void for_each_tap(const ConvGeometry& g, const ConvSpec& spec, Fn&& fn) {
  const Index B = g.in.b, H = g.in.h, W = g.in.w;
  const Index Bo = g.out.b, Ho = g.out.h, Wo = g.out.w;
  const Index sh = spec.stride_h, sw = spec.stride_w;
  const std::size_t kvol = spec.kernel_volume();
  for (std::size_t co = 0; co < g.out.c; ++co) {
    const std::size_t grp = co / g.cout_per_group;
    for (std::size_t cl = 0; cl < g.cin_per_group; ++cl) {
      const std::size_t ci = grp * g.cin_per_group + cl;
      for (std::size_t kb = 0; kb < spec.kb; ++kb) {
        const Range rb = valid_range(B, Bo, 1, kb, g.pad_b);
        for (std::size_t kh = 0; kh < spec.kh; ++kh) {
          const Range rh = valid_range(H, Ho, sh, kh, g.pad_h);
          for (std::size_t kw = 0; kw < spec.kw; ++kw) {
            const Range rw = valid_range(W, Wo, sw, kw, g.pad_w);
            if (rw.lo >= rw.hi) continue;
            const std::size_t widx = co * g.cin_per_group * kvol + cl * kvol +
                                     (kb * spec.kh + kh) * spec.kw + kw;
            for (Index bo = rb.lo; bo < rb.hi; ++bo) {
              const Index bi = bo + static_cast<Index>(kb) - static_cast<Index>(g.pad_b);
              for (Index ho = rh.lo; ho < rh.hi; ++ho) {
                const Index hi = ho * sh + static_cast<Index>(kh) - static_cast<Index>(g.pad_h);
                const std::size_t out_row = ((co * Bo + bo) * Ho + ho) * Wo;
                const std::size_t in_row = ((ci * B + bi) * H + hi) * W;
                const Index wi0 = rw.lo * sw + static_cast<Index>(kw) - static_cast<Index>(g.pad_w);
                fn(widx, out_row + rw.lo, in_row + wi0, rw.hi - rw.lo, sw);
              }
            }
          }
        }
      }
    }
  }
}

}  // namespace

Dims4 conv_output_dims(const Dims4& in, std::size_t out_channels, const ConvSpec& spec) {
  const bool same = spec.padding == Padding::kSame;
  Dims4 out;
  out.c = out_channels;
  out.b = out_extent(in.b, spec.kb, 1, same ? same_pad(spec.kb) : 0);
  out.h = out_extent(in.h, spec.kh, spec.stride_h, same ? same_pad(spec.kh) : 0);
  out.w = out_extent(in.w, spec.kw, spec.stride_w, same ? same_pad(spec.kw) : 0);
  return out;
}

ConvGeometry conv_geometry(const Dims4& in, const Shape& weight, const ConvSpec& spec,
                           std::string_view name) {
  const std::string who = "conv '" + std::string(name) + "'";
  if (spec.kb == 0 || spec.kh == 0 || spec.kw == 0 || spec.stride_h == 0 ||
      spec.stride_w == 0 || spec.groups == 0) {
    throw ConfigError(who + ": kernel extents, strides and groups must be >= 1");
  }
  if (in.c % spec.groups != 0) {
    throw ConfigError(who + ": groups " + std::to_string(spec.groups) +
                      " does not divide input channels " + std::to_string(in.c));
  }
  if (weight.rank() != 2) {
    throw ConfigError(who + ": weight '" + std::string(name) +
                      ".weight' must be (C_out, C_in/groups*kb*kh*kw), got " +
                      weight.to_string());
  }
  ConvGeometry g;
  g.in = in;
  g.cin_per_group = in.c / spec.groups;
  const std::size_t cout = weight[0];
  if (weight[1] != g.cin_per_group * spec.kernel_volume() || cout % spec.groups != 0) {
    throw ConfigError(who + ": weight '" + std::string(name) + ".weight' shape " +
                      weight.to_string() + " does not match kernel " + std::to_string(spec.kb) +
                      "x" + std::to_string(spec.kh) + "x" + std::to_string(spec.kw) +
                      " with " + std::to_string(in.c) + " input channels and groups " +
                      std::to_string(spec.groups));
  }
  g.cout_per_group = cout / spec.groups;
  if (spec.padding == Padding::kSame) {
    g.pad_b = same_pad(spec.kb);
    g.pad_h = same_pad(spec.kh);
    g.pad_w = same_pad(spec.kw);
  }
  g.out = conv_output_dims(in, cout, spec);
  if (g.out.b == 0 || g.out.h == 0 || g.out.w == 0) {
    throw ConfigError(who + ": input " + in.shape().to_string() +
                      " is smaller than the kernel under valid padding");
  }
  return g;
}

std::uint64_t conv_flops(const Dims4& in, std::size_t out_channels, const ConvSpec& spec,
                         bool bias) {
  const Dims4 out = conv_output_dims(in, out_channels, spec);
  const std::uint64_t outputs = out.numel();
  const std::uint64_t macs = outputs * spec.kernel_volume() * (in.c / spec.groups);
  return 2 * macs + (bias ? outputs : 0);
}

template <typename T>
void conv3d_forward(const ConvGeometry& g, const ConvSpec& spec, std::span<const T> x,
                    std::span<const T> w, std::span<const T> bias, std::span<T> y) {
  const std::size_t plane = g.out.b * g.out.h * g.out.w;
  for (std::size_t co = 0; co < g.out.c; ++co) {
    const T b0 = bias.empty() ? T{0} : bias[co];
    std::fill_n(y.begin() + co * plane, plane, b0);
  }
  for_each_tap(g, spec,
               [&](std::size_t widx, std::size_t yo, std::size_t xo, Index n, Index stride) {
                 const T wv = w[widx];
                 T* yr = y.data() + yo;
                 const T* xr = x.data() + xo;
                 if (stride == 1) {
                   for (Index i = 0; i < n; ++i) yr[i] += wv * xr[i];
                 } else {
                   for (Index i = 0; i < n; ++i) yr[i] += wv * xr[i * stride];
                 }
               });
}

template <typename T>
void conv3d_backward_input(const ConvGeometry& g, const ConvSpec& spec, std::span<const T> gy,
                           std::span<const T> w, std::span<T> gx) {
  for_each_tap(g, spec,
               [&](std::size_t widx, std::size_t yo, std::size_t xo, Index n, Index stride) {
                 const T wv = w[widx];
                 const T* gyr = gy.data() + yo;
                 T* gxr = gx.data() + xo;
                 if (stride == 1) {
                   for (Index i = 0; i < n; ++i) gxr[i] += wv * gyr[i];
                 } else {
                   for (Index i = 0; i < n; ++i) gxr[i * stride] += wv * gyr[i];
                 }
               });
}

template <typename T>
void conv3d_backward_weight(const ConvGeometry& g, const ConvSpec& spec, std::span<const T> gy,
                            std::span<const T> x, std::span<T> gw) {
  for_each_tap(g, spec,
               [&](std::size_t widx, std::size_t yo, std::size_t xo, Index n, Index stride) {
                 const T* gyr = gy.data() + yo;
                 const T* xr = x.data() + xo;
                 T acc{0};
                 if (stride == 1) {
                   for (Index i = 0; i < n; ++i) acc += gyr[i] * xr[i];
                 } else {
                   for (Index i = 0; i < n; ++i) acc += gyr[i] * xr[i * stride];
                 }
                 gw[widx] += acc;
               });
}

template <typename T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& w, const ConvSpec& spec,
                 const Tensor<T>* bias) {
  const ConvGeometry g = conv_geometry(dims4(x.shape(), "conv input"), w.shape(), spec);
  Tensor<T> y(g.out.shape());
  std::span<const T> b;
  if (bias) b = bias->data();
  conv3d_forward<T>(g, spec, x.data(), w.data(), b, y.data());
  return y;
}

template <typename T>
Tensor<T> conv3d_transpose(const Tensor<T>& y, const Tensor<T>& w, const ConvSpec& spec,
                           const Dims4& in) {
  const ConvGeometry g = conv_geometry(in, w.shape(), spec);
  if (!(y.shape() == g.out.shape())) {
    throw ConfigError("conv3d_transpose: expected " + g.out.shape().to_string() + ", got " +
                      y.shape().to_string());
  }
  Tensor<T> x(in.shape());
  conv3d_backward_input<T>(g, spec, y.data(), w.data(), x.data());
  return x;
}

#define FAIRHYP_INSTANTIATE(T)                                                                 \
  template void conv3d_forward<T>(const ConvGeometry&, const ConvSpec&, std::span<const T>,   \
                                  std::span<const T>, std::span<const T>, std::span<T>);       \
  template void conv3d_backward_input<T>(const ConvGeometry&, const ConvSpec&,                 \
                                         std::span<const T>, std::span<const T>, std::span<T>); \
  template void conv3d_backward_weight<T>(const ConvGeometry&, const ConvSpec&,                \
                                          std::span<const T>, std::span<const T>,              \
                                          std::span<T>);                                       \
  template Tensor<T> conv3d<T>(const Tensor<T>&, const Tensor<T>&, const ConvSpec&,            \
                               const Tensor<T>*);                                              \
  template Tensor<T> conv3d_transpose<T>(const Tensor<T>&, const Tensor<T>&, const ConvSpec&,  \
                                         const Dims4&);

FAIRHYP_INSTANTIATE(float)
FAIRHYP_INSTANTIATE(double)

#undef FAIRHYP_INSTANTIATE

}  // namespace fairhyp
