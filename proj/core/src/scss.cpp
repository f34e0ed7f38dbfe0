#include "fairhyp/scss.hpp"

#include <cmath>
#include <memory>

#include "fairhyp/errors.hpp"
#include "fairhyp/ops.hpp"

namespace fairhyp {

namespace {

// Element (row, step) of one scanned sequence lives at row*row_stride +
// step*step_stride + offset in every (rows, L, ...) buffer.
struct ScanLayout {
  std::size_t steps, width, state;
  std::size_t row_stride, step_stride, offset;

  std::size_t at(std::size_t row, std::size_t step) const {
    return row * row_stride + step * step_stride + offset;
  }
  std::size_t step_at(std::size_t s, ScanDirection dir) const {
    return dir == ScanDirection::kForward ? s : steps - 1 - s;
  }
};

template <typename T>
void scan_forward(const ScanLayout& lay, const T* u, const T* dt, const T* bm, const T* cm,
                  const T* a, const T* skip, T* y, ScanDirection dir, std::vector<T>& h,
                  T* states, T* state_abs_max) {
  const std::size_t C = lay.width, N = lay.state;
  h.assign(C * N, T{0});
  for (std::size_t s = 0; s < lay.steps; ++s) {
    const std::size_t step = lay.step_at(s, dir);
    T peak{0};
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t ic = lay.at(c, step);
      const T dtv = dt[ic];
      const T uv = u[ic];
      T acc{0};
      for (std::size_t n = 0; n < N; ++n) {
        const std::size_t in = lay.at(n, step);
        T& hn = h[c * N + n];
        hn = std::exp(dtv * a[c * N + n]) * hn + dtv * bm[in] * uv;
        acc += cm[in] * hn;
        peak = std::max(peak, std::abs(hn));
      }
      y[ic] = acc + skip[c] * uv;
    }
    if (states) std::copy(h.begin(), h.end(), states + s * C * N);
    if (state_abs_max) state_abs_max[s] = peak;
  }
}

template <typename T>
void check_finite_dt(const Tensor<T>& dt) {
  for (std::size_t i = 0; i < dt.size(); ++i) {
    if (!std::isfinite(static_cast<double>(dt[i]))) {
      throw NumericError("selective scan: step size dt is not finite at element " +
                         std::to_string(i));
    }
  }
}

}  // namespace

std::uint64_t scan_flops(std::size_t tokens, std::size_t width, std::size_t state) {
  return static_cast<std::uint64_t>(tokens) * width * (8 * state + 2);
}

template <typename T>
Tensor<T> scan_recurrence(const Tensor<T>& u, const Tensor<T>& dt, const Tensor<T>& b,
                          const Tensor<T>& c, const Tensor<T>& a, const Tensor<T>& skip,
                          ScanDirection dir, std::vector<T>* state_abs_max) {
  if (u.shape().rank() != 2) throw ConfigError("scan: u must be (C, L)");
  const std::size_t C = u.shape()[0], L = u.shape()[1];
  if (a.shape().rank() != 2 || a.shape()[0] != C) throw ConfigError("scan: a must be (C, N)");
  const std::size_t N = a.shape()[1];
  if (!(dt.shape() == u.shape()) || !(b.shape() == Shape{N, L}) || !(c.shape() == Shape{N, L}) ||
      skip.size() != C) {
    throw ConfigError("scan: inconsistent shapes u " + u.shape().to_string() + ", dt " +
                      dt.shape().to_string() + ", b " + b.shape().to_string() + ", c " +
                      c.shape().to_string() + ", skip " + skip.shape().to_string());
  }
  check_finite_dt(dt);
  const ScanLayout lay{L, C, N, L, 1, 0};
  Tensor<T> y(u.shape());
  std::vector<T> h;
  if (state_abs_max) state_abs_max->assign(L, T{0});
  scan_forward(lay, u.data().data(), dt.data().data(), b.data().data(), c.data().data(),
               a.data().data(), skip.data().data(), y.data().data(), dir, h, static_cast<T*>(nullptr),
               state_abs_max ? state_abs_max->data() : nullptr);
  return y;
}

template <typename T>
Tensor<T> selective_scan(const Tensor<T>& tokens, const ScanParams<T>& p, ScanDirection dir) {
  if (tokens.shape().rank() != 2) throw ConfigError("selective_scan: tokens must be (L, C)");
  const std::size_t L = tokens.shape()[0], C = tokens.shape()[1];
  if (L == 0 || p.width() != C) {
    throw ConfigError("selective_scan: token width " + std::to_string(C) +
                      " does not match parameters of width " + std::to_string(p.width()));
  }
  const std::size_t N = p.state();
  Tensor<T> u(Shape{C, L}), dt(Shape{C, L}), b(Shape{N, L}), c(Shape{N, L}), a(Shape{C, N});
  for (std::size_t t = 0; t < L; ++t) {
    const T* tok = tokens.data().data() + t * C;
    for (std::size_t i = 0; i < C; ++i) {
      u[i * L + t] = tok[i];
      T z = p.dt_bias[i];
      for (std::size_t j = 0; j < C; ++j) z += p.dt_weight[i * C + j] * tok[j];
      dt[i * L + t] = z > T{0} ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    }
    for (std::size_t n = 0; n < N; ++n) {
      T zb{0}, zc{0};
      for (std::size_t j = 0; j < C; ++j) {
        zb += p.b_weight[n * C + j] * tok[j];
        zc += p.c_weight[n * C + j] * tok[j];
      }
      b[n * L + t] = zb;
      c[n * L + t] = zc;
    }
  }
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = -std::exp(p.a_log[i]);
  const Tensor<T> y = scan_recurrence(u, dt, b, c, a, p.skip, dir);
  Tensor<T> out(Shape{L, C});
  for (std::size_t t = 0; t < L; ++t)
    for (std::size_t i = 0; i < C; ++i) out[t * C + i] = y[i * L + t];
  return out;
}

template <typename T>
Var selective_scan_op(Tape<T>& tape, Var u, Var dt, Var b, Var c, Var a, Var skip,
                      ScanDirection dir) {
  const Dims4 du = dims4(tape.value(u).shape(), "scan input");
  const Dims4 db = dims4(tape.value(b).shape(), "scan B");
  const Shape& as = tape.value(a).shape();
  if (!(tape.value(dt).shape() == tape.value(u).shape()) ||
      !(tape.value(c).shape() == tape.value(b).shape()) || db.b != du.b || db.h != du.h ||
      db.w != du.w || as.rank() != 2 || as[0] != du.c || as[1] != db.c ||
      tape.value(skip).size() != du.c) {
    throw ConfigError("selective_scan_op: inconsistent shapes for input " +
                      du.shape().to_string());
  }
  check_finite_dt(tape.value(dt));
  const std::size_t P = du.plane(), L = du.b, C = du.c, N = db.c;
  auto states = std::make_shared<std::vector<T>>(P * L * C * N);
  Tensor<T> y(tape.value(u).shape());
  std::vector<T> h;
  for (std::size_t l = 0; l < P; ++l) {
    const ScanLayout lay{L, C, N, L * P, P, l};
    scan_forward(lay, tape.value(u).data().data(), tape.value(dt).data().data(),
                 tape.value(b).data().data(), tape.value(c).data().data(),
                 tape.value(a).data().data(), tape.value(skip).data().data(), y.data().data(),
                 dir, h, states->data() + l * L * C * N, static_cast<T*>(nullptr));
  }
  const std::uint64_t flops = scan_flops(P * L, C, N);
  return tape.record(
      "selective_scan", std::move(y), {u, dt, b, c, a, skip},
      [=](Tape<T>& tp, const Tensor<T>& g) {
        const auto& uv = tp.value(u);
        const auto& dtv = tp.value(dt);
        const auto& bv = tp.value(b);
        const auto& cv = tp.value(c);
        const auto& av = tp.value(a);
        const auto& sv = tp.value(skip);
        Tensor<T> gu(uv.shape()), gdt(dtv.shape()), gb(bv.shape()), gc(cv.shape()),
            ga(av.shape()), gs(sv.shape());
        std::vector<T> gh(C * N);
        for (std::size_t l = 0; l < P; ++l) {
          const ScanLayout lay{L, C, N, L * P, P, l};
          const T* st = states->data() + l * L * C * N;
          std::fill(gh.begin(), gh.end(), T{0});
          for (std::size_t s = L; s-- > 0;) {
            const std::size_t step = lay.step_at(s, dir);
            for (std::size_t ch = 0; ch < C; ++ch) {
              const std::size_t ic = lay.at(ch, step);
              const T gy = g[ic];
              const T d = dtv[ic];
              const T x = uv[ic];
              gs[ch] += gy * x;
              T gu_acc = gy * sv[ch];
              T gdt_acc{0};
              for (std::size_t n = 0; n < N; ++n) {
                const std::size_t in = lay.at(n, step);
                const T an = av[ch * N + n];
                const T da = std::exp(d * an);
                const T ht = st[s * C * N + ch * N + n];
                const T hp = s > 0 ? st[(s - 1) * C * N + ch * N + n] : T{0};
                const T bn = bv[in];
                gc[in] += gy * ht;
                const T gt = gh[ch * N + n] + gy * cv[in];
                const T gda = gt * hp;
                gdt_acc += gda * da * an + gt * bn * x;
                ga[ch * N + n] += gda * da * d;
                gb[in] += gt * d * x;
                gu_acc += gt * d * bn;
                gh[ch * N + n] = gt * da;
              }
              gdt[ic] += gdt_acc;
              gu[ic] += gu_acc;
            }
          }
        }
        const std::pair<Var, const Tensor<T>*> outs[] = {{u, &gu}, {dt, &gdt}, {b, &gb},
                                                         {c, &gc}, {a, &ga},   {skip, &gs}};
        for (const auto& [v, src] : outs) {
          if (!tp.requires_grad(v)) continue;
          auto& dst = tp.grad_slot(v);
          for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += (*src)[i];
        }
      },
      flops);
}

void ScssConfig::validate() const {
  if (channels == 0) throw ConfigError("scss: channels must be >= 1");
  if (state_dim == 0) throw ConfigError("scss: state_dim must be >= 1");
}

Scss::Scss(std::string prefix, ScssConfig config) : prefix_(std::move(prefix)), config_(config) {
  config_.validate();
  const std::size_t C = config_.channels, N = config_.state_dim;
  for (ScanDirection dir : {ScanDirection::kForward, ScanDirection::kBackward}) {
    ScanLayers& sl = dir == ScanDirection::kForward ? fwd_ : bwd_;
    const std::string p = scan_prefix(dir);
    sl.dt = nn::Conv(p + ".dt", C, C, nn::pointwise());
    sl.b = nn::Conv(p + ".b", C, N, nn::pointwise(), false);
    sl.c = nn::Conv(p + ".c", C, N, nn::pointwise(), false);
  }
  merge_in_ = nn::Conv(prefix_ + ".merge_in", 6 * C, 2 * C, nn::pointwise());
  merge_out_ = nn::Conv(prefix_ + ".merge_out", 2 * C, C, nn::pointwise());
  down_ = nn::Conv(prefix_ + ".down", C, C, nn::pointwise());
  gate_ = nn::Conv(prefix_ + ".gate", C, C, nn::pointwise());
  fusion_ = nn::Conv(prefix_ + ".fusion", C, C, nn::pointwise());
  final_ = nn::Conv(prefix_ + ".final", C, C, nn::pointwise());
}

std::string Scss::scan_prefix(ScanDirection dir) const {
  if (config_.tied_scans || dir == ScanDirection::kForward) return prefix_ + ".fwd";
  return prefix_ + ".bwd";
}

const Scss::ScanLayers& Scss::layers(ScanDirection dir) const {
  return (config_.tied_scans || dir == ScanDirection::kForward) ? fwd_ : bwd_;
}

template <typename T>
void Scss::init(ParamStore<T>& store) const {
  const std::size_t C = config_.channels, N = config_.state_dim;
  const int directions = config_.tied_scans ? 1 : 2;
  for (int i = 0; i < directions; ++i) {
    const ScanDirection dir = i == 0 ? ScanDirection::kForward : ScanDirection::kBackward;
    const ScanLayers& sl = layers(dir);
    sl.dt.init(store);
    sl.b.init(store);
    sl.c.init(store);
    auto& a_log = store.add(scan_prefix(dir) + ".a_log", Shape{C, N}, Init::zeros()).value;
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t n = 0; n < N; ++n)
        a_log[c * N + n] = static_cast<T>(std::log(static_cast<double>(n + 1)));
    store.add(scan_prefix(dir) + ".skip", Shape{C}, Init::constant(1.0));
  }
  for (const auto* c : {&merge_in_, &merge_out_, &down_, &gate_, &fusion_, &final_}) {
    c->init(store);
  }
}

template <typename T>
void Scss::set_identity(ParamStore<T>& store) const {
  const int directions = config_.tied_scans ? 1 : 2;
  for (int i = 0; i < directions; ++i) {
    const ScanDirection dir = i == 0 ? ScanDirection::kForward : ScanDirection::kBackward;
    const ScanLayers& sl = layers(dir);
    sl.dt.zero(store);
    sl.b.zero(store);
    sl.c.zero(store);
    store.value(scan_prefix(dir) + ".a_log").fill(T{0});
    store.value(scan_prefix(dir) + ".skip").fill(T{0});
  }
  for (const auto* c : {&merge_in_, &merge_out_, &down_, &gate_, &fusion_}) c->zero(store);
  final_.set_identity(store);
}

template <typename T>
ScanParams<T> Scss::scan_params(const ParamStore<T>& store, ScanDirection dir) const {
  const ScanLayers& sl = layers(dir);
  const std::string p = scan_prefix(dir);
  return ScanParams<T>{store.value(sl.dt.weight_name()), store.value(sl.dt.bias_name()),
                       store.value(sl.b.weight_name()), store.value(sl.c.weight_name()),
                       store.value(p + ".a_log"),       store.value(p + ".skip")};
}

template <typename T>
Var Scss::scan_branch(Tape<T>& tape, Var x, ScanDirection dir) const {
  const ScanLayers& sl = layers(dir);
  const std::string p = scan_prefix(dir);
  const Var dt = softplus(tape, sl.dt.forward(tape, x));
  const Var b = sl.b.forward(tape, x);
  const Var c = sl.c.forward(tape, x);
  const Var a = scale(tape, exponential(tape, tape.param(p + ".a_log")), T{-1});
  return selective_scan_op(tape, x, dt, b, c, a, tape.param(p + ".skip"), dir);
}

template <typename T>
Var Scss::stats_branch(Tape<T>& tape, Var x) const {
  const Dims4 d = dims4(tape.value(x).shape(), "scss input");
  const StatVars s = spatial_stats(tape, x);
  const Var parts[] = {s.mean, s.max, s.min, s.var};
  return broadcast_spatial(tape, concat_channels<T>(tape, parts), d.h, d.w);
}

template <typename T>
Var Scss::merge(Tape<T>& tape, Var x) const {
  const Dims4 d = dims4(tape.value(x).shape(), "scss input");
  if (d.c != config_.channels) {
    throw ConfigError("scss '" + prefix_ + "': expected " + std::to_string(config_.channels) +
                      " channels, got " + d.shape().to_string());
  }
  const Var parts[] = {scan_branch(tape, x, ScanDirection::kForward),
                       scan_branch(tape, x, ScanDirection::kBackward), stats_branch(tape, x)};
  Var f = merge_in_.forward(tape, concat_channels<T>(tape, parts));
  f = leaky_relu(tape, f, static_cast<T>(config_.leaky_slope));
  return merge_out_.forward(tape, f);
}

template <typename T>
Var Scss::forward(Tape<T>& tape, Var x) const {
  const Var f = merge(tape, x);
  const Var mixed = mul(tape, down_.forward(tape, f), gate_.forward(tape, x));
  const Var fused = add(tape, fusion_.forward(tape, mixed), x);
  return final_.forward(tape, config_.final_input == FinalInput::kFusion ? fused : f);
}

std::size_t Scss::param_count() const {
  const std::size_t C = config_.channels, N = config_.state_dim;
  const std::size_t per_dir =
      fwd_.dt.param_count() + fwd_.b.param_count() + fwd_.c.param_count() + C * N + C;
  std::size_t n = per_dir * (config_.tied_scans ? 1 : 2);
  for (const auto* c : {&merge_in_, &merge_out_, &down_, &gate_, &fusion_, &final_}) {
    n += c->param_count();
  }
  return n;
}

nn::Cost Scss::cost(const Dims4& in) const {
  const std::size_t C = config_.channels, N = config_.state_dim;
  const std::uint64_t n = in.numel();
  nn::Cost cost;
  for (ScanDirection dir : {ScanDirection::kForward, ScanDirection::kBackward}) {
    const ScanLayers& sl = layers(dir);
    nn::Cost c;
    c += sl.dt.cost(in);
    c.flops += n;  // softplus
    c += sl.b.cost(in);
    c += sl.c.cost(in);
    c.flops += 2 * C * N;  // exp, negate
    c.flops += scan_flops(in.b * in.plane(), C, N);
    c.params += C * N + C;
    if (config_.tied_scans && dir == ScanDirection::kBackward) c.params = 0;
    cost += c;
  }
  cost.flops += 6 * n;  // mean, max, min (one each), variance (three)
  Dims4 cat = in;
  cat.c = 6 * C;
  Dims4 hidden;
  cost += merge_in_.cost(cat, &hidden);
  cost.flops += hidden.numel();  // leaky relu
  cost += merge_out_.cost(hidden);
  cost += down_.cost(in);
  cost += gate_.cost(in);
  cost.flops += n;  // product
  cost += fusion_.cost(in);
  cost.flops += n;  // residual
  cost += final_.cost(in);
  return cost;
}

#define FAIRHYP_INSTANTIATE(T)                                                                 \
  template Tensor<T> scan_recurrence<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,  \
                                        const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,  \
                                        ScanDirection, std::vector<T>*);                       \
  template Tensor<T> selective_scan<T>(const Tensor<T>&, const ScanParams<T>&, ScanDirection); \
  template Var selective_scan_op<T>(Tape<T>&, Var, Var, Var, Var, Var, Var, ScanDirection);    \
  template void Scss::init<T>(ParamStore<T>&) const;                                           \
  template void Scss::set_identity<T>(ParamStore<T>&) const;                                   \
  template ScanParams<T> Scss::scan_params<T>(const ParamStore<T>&, ScanDirection) const;      \
  template Var Scss::scan_branch<T>(Tape<T>&, Var, ScanDirection) const;                       \
  template Var Scss::stats_branch<T>(Tape<T>&, Var) const;                                     \
  template Var Scss::merge<T>(Tape<T>&, Var) const;                                            \
  template Var Scss::forward<T>(Tape<T>&, Var) const;

FAIRHYP_INSTANTIATE(float)
FAIRHYP_INSTANTIATE(double)

#undef FAIRHYP_INSTANTIATE

}  // namespace fairhyp
