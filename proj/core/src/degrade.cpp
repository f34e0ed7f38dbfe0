#include "fairhyp/degrade.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "fairhyp/errors.hpp"
#include "fairhyp/rng.hpp"

namespace fairhyp {

namespace {

struct CubeDims {
  std::size_t b, h, w;
  std::size_t plane() const { return h * w; }
};

CubeDims cube_dims(const Tensor<float>& cube, const char* what) {
  if (cube.shape().rank() != 3) {
    throw ConfigError(std::string(what) + ": expected a (B,H,W) cube, got " +
                      cube.shape().to_string());
  }
  return {cube.shape()[0], cube.shape()[1], cube.shape()[2]};
}

std::vector<std::size_t> choose(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::size_t fraction_count(std::size_t n, double fraction) {
  // The small slack keeps exact fractions such as 162/3 from rounding up.
  const auto k = static_cast<std::size_t>(std::ceil(static_cast<double>(n) * fraction - 1e-9));
  return std::clamp<std::size_t>(k, 1, n);
}

void add_gaussian(Tensor<float>& cube, std::size_t band, std::size_t plane, double stddev,
                  Rng& rng) {
  if (stddev == 0.0) return;
  std::normal_distribution<double> noise(0.0, stddev);
  float* p = cube.data().data() + band * plane;
  for (std::size_t i = 0; i < plane; ++i) p[i] = static_cast<float>(p[i] + noise(rng));
}

template <typename V>
void read_field(const nlohmann::json& j, const char* key, V& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<V>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("degradation spec: field '") + key + "' has the wrong type");
  }
}

}  // namespace

std::string to_string(DegradationKind kind) {
  switch (kind) {
    case DegradationKind::kGaussian: return "gaussian";
    case DegradationKind::kBlindGaussian: return "blind_gaussian";
    case DegradationKind::kDeadline: return "deadline";
    case DegradationKind::kDownsample: return "downsample";
    case DegradationKind::kRealisticMix: return "realistic_mix";
  }
  return "gaussian";
}

DegradationKind degradation_kind_from_string(const std::string& s) {
  for (auto k : {DegradationKind::kGaussian, DegradationKind::kBlindGaussian,
                 DegradationKind::kDeadline, DegradationKind::kDownsample,
                 DegradationKind::kRealisticMix}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("unknown degradation kind '" + s +
                    "' (expected gaussian, blind_gaussian, deadline, downsample, realistic_mix)");
}

void DegradationSpec::validate() const {
  if (peak != 1.0 && peak != 255.0) throw ConfigError("degradation: peak must be 1 or 255");
  auto fraction = [](double f, const char* name) {
    if (!(f > 0.0 && f <= 1.0)) {
      throw ConfigError(std::string("degradation: ") + name + " must lie in (0, 1]");
    }
  };
  switch (kind) {
    case DegradationKind::kGaussian:
      if (!(sigma >= 0.0)) throw ConfigError("degradation: sigma must be >= 0");
      break;
    case DegradationKind::kBlindGaussian:
    case DegradationKind::kRealisticMix:
      for (double s : sigma_set) {
        if (!(s >= 0.0)) throw ConfigError("degradation: sigma_set entries must be >= 0");
      }
      if (!(sigma_min >= 0.0 && sigma_min <= sigma_max)) {
        throw ConfigError("degradation: need 0 <= sigma_min <= sigma_max");
      }
      if (kind == DegradationKind::kRealisticMix) {
        fraction(stripe_band_fraction, "stripe_band_fraction");
        fraction(stripe_column_fraction, "stripe_column_fraction");
        fraction(impulse_band_fraction, "impulse_band_fraction");
        fraction(impulse_density, "impulse_density");
      }
      break;
    case DegradationKind::kDeadline:
      fraction(band_fraction, "band_fraction");
      fraction(row_fraction_min, "row_fraction_min");
      fraction(row_fraction_max, "row_fraction_max");
      if (row_fraction_min > row_fraction_max) {
        throw ConfigError("degradation: row_fraction_min exceeds row_fraction_max");
      }
      break;
    case DegradationKind::kDownsample:
      if (scale != 4 && scale != 8) throw ConfigError("degradation: scale must be 4 or 8");
      break;
  }
}

nlohmann::json DegradationSpec::to_json() const {
  return {{"schema", 1},
          {"kind", to_string(kind)},
          {"peak", peak},
          {"seed", seed},
          {"clip", clip},
          {"sigma", sigma},
          {"sigma_set", sigma_set},
          {"sigma_min", sigma_min},
          {"sigma_max", sigma_max},
          {"band_fraction", band_fraction},
          {"row_fraction_min", row_fraction_min},
          {"row_fraction_max", row_fraction_max},
          {"contiguous_rows", contiguous_rows},
          {"scale", scale},
          {"stripe_band_fraction", stripe_band_fraction},
          {"stripe_column_fraction", stripe_column_fraction},
          {"stripe_amplitude", stripe_amplitude},
          {"impulse_band_fraction", impulse_band_fraction},
          {"impulse_density", impulse_density}};
}

DegradationSpec DegradationSpec::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("degradation spec: expected a JSON object");
  DegradationSpec s;
  const nlohmann::json defaults = s.to_json();
  for (const auto& [key, value] : j.items()) {
    if (!defaults.contains(key)) {
      throw ConfigError("degradation spec: unknown field '" + key + "'");
    }
  }
  int schema = 1;
  read_field(j, "schema", schema);
  if (schema != 1) throw ConfigError("degradation spec: unsupported schema");
  std::string kind = to_string(s.kind);
  read_field(j, "kind", kind);
  s.kind = degradation_kind_from_string(kind);
  read_field(j, "peak", s.peak);
  read_field(j, "seed", s.seed);
  read_field(j, "clip", s.clip);
  read_field(j, "sigma", s.sigma);
  read_field(j, "sigma_set", s.sigma_set);
  read_field(j, "sigma_min", s.sigma_min);
  read_field(j, "sigma_max", s.sigma_max);
  read_field(j, "band_fraction", s.band_fraction);
  read_field(j, "row_fraction_min", s.row_fraction_min);
  read_field(j, "row_fraction_max", s.row_fraction_max);
  read_field(j, "contiguous_rows", s.contiguous_rows);
  read_field(j, "scale", s.scale);
  read_field(j, "stripe_band_fraction", s.stripe_band_fraction);
  read_field(j, "stripe_column_fraction", s.stripe_column_fraction);
  read_field(j, "stripe_amplitude", s.stripe_amplitude);
  read_field(j, "impulse_band_fraction", s.impulse_band_fraction);
  read_field(j, "impulse_density", s.impulse_density);
  s.validate();
  return s;
}

std::size_t BandRowMask::masked_bands() const {
  std::size_t n = 0;
  for (std::size_t b = 0; b < bands; ++b) {
    for (std::size_t r = 0; r < rows; ++r) {
      if (at(b, r)) {
        ++n;
        break;
      }
    }
  }
  return n;
}

double cubic_kernel(double x, double a) {
  const double t = std::abs(x);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

namespace {

struct Taps {
  std::vector<std::size_t> index;
  std::vector<double> weight;
};

// Per-output-sample taps for reducing `n` samples by `scale`.
std::vector<Taps> reduction_taps(std::size_t n, std::size_t scale) {
  const double s = static_cast<double>(scale);
  const auto reflect = [n](long j) {
    const long m = static_cast<long>(n);
    while (j < 0 || j >= m) j = j < 0 ? -j - 1 : 2 * m - 1 - j;
    return static_cast<std::size_t>(j);
  };
  std::vector<Taps> out(n / scale);
  for (std::size_t o = 0; o < out.size(); ++o) {
    const double u = (static_cast<double>(o) + 0.5) * s - 0.5;
    const long lo = static_cast<long>(std::floor(u - 2.0 * s));
    const long hi = static_cast<long>(std::ceil(u + 2.0 * s));
    double total = 0.0;
    for (long j = lo; j <= hi; ++j) {
      const double w = cubic_kernel((u - static_cast<double>(j)) / s);
      if (w == 0.0) continue;
      out[o].index.push_back(reflect(j));
      out[o].weight.push_back(w);
      total += w;
    }
    for (double& w : out[o].weight) w /= total;
  }
  return out;
}

}  // namespace

Tensor<float> bicubic_downsample(const Tensor<float>& cube, std::size_t scale) {
  const CubeDims d = cube_dims(cube, "downsample");
  if (scale < 2) throw ConfigError("downsample: scale must be >= 2");
  if (d.h % scale != 0 || d.w % scale != 0) {
    throw ConfigError("downsample: scale " + std::to_string(scale) + " does not divide " +
                      std::to_string(d.h) + "x" + std::to_string(d.w));
  }
  const auto rows = reduction_taps(d.h, scale);
  const auto cols = reduction_taps(d.w, scale);
  const std::size_t oh = rows.size(), ow = cols.size();
  Tensor<float> out(Shape{d.b, oh, ow});
  std::vector<double> tmp(d.h * ow);
  for (std::size_t b = 0; b < d.b; ++b) {
    const float* src = cube.data().data() + b * d.plane();
    for (std::size_t i = 0; i < d.h; ++i) {
      for (std::size_t o = 0; o < ow; ++o) {
        double acc = 0.0;
        for (std::size_t k = 0; k < cols[o].index.size(); ++k)
          acc += cols[o].weight[k] * src[i * d.w + cols[o].index[k]];
        tmp[i * ow + o] = acc;
      }
    }
    float* dst = out.data().data() + b * oh * ow;
    for (std::size_t o = 0; o < oh; ++o) {
      for (std::size_t j = 0; j < ow; ++j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < rows[o].index.size(); ++k)
          acc += rows[o].weight[k] * tmp[rows[o].index[k] * ow + j];
        dst[o * ow + j] = static_cast<float>(acc);
      }
    }
  }
  return out;
}

Degraded degrade(const Tensor<float>& clean, const DegradationSpec& spec) {
  spec.validate();
  const CubeDims d = cube_dims(clean, "degrade");
  const double slack = 1e-6 * spec.peak;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    const double v = clean[i];
    if (!(v >= -slack && v <= spec.peak + slack)) {
      throw ConfigError("degrade: clean value " + std::to_string(v) + " at element " +
                        std::to_string(i) + " lies outside [0, " + std::to_string(spec.peak) +
                        "]");
    }
  }
  const double unit = spec.peak / 255.0;
  Rng pick(derive_seed(spec.seed, 1));
  Rng noise(derive_seed(spec.seed, 2));

  Degraded out;
  out.cube = clean;
  switch (spec.kind) {
    case DegradationKind::kGaussian:
      out.band_sigma.assign(d.b, spec.sigma);
      for (std::size_t b = 0; b < d.b; ++b) add_gaussian(out.cube, b, d.plane(), spec.sigma * unit, noise);
      break;
    case DegradationKind::kBlindGaussian:
      for (std::size_t b = 0; b < d.b; ++b) {
        if (!spec.sigma_set.empty()) {
          std::uniform_int_distribution<std::size_t> idx(0, spec.sigma_set.size() - 1);
          out.band_sigma.push_back(spec.sigma_set[idx(pick)]);
        } else {
          std::uniform_real_distribution<double> range(spec.sigma_min, spec.sigma_max);
          out.band_sigma.push_back(range(pick));
        }
      }
      for (std::size_t b = 0; b < d.b; ++b)
        add_gaussian(out.cube, b, d.plane(), out.band_sigma[b] * unit, noise);
      break;
    case DegradationKind::kDeadline: {
      BandRowMask mask{d.b, d.h, std::vector<std::uint8_t>(d.b * d.h, 0)};
      std::uniform_real_distribution<double> frac(spec.row_fraction_min, spec.row_fraction_max);
      for (std::size_t b : choose(d.b, fraction_count(d.b, spec.band_fraction), pick)) {
        const auto n = std::clamp<std::size_t>(
            static_cast<std::size_t>(std::lround(frac(pick) * static_cast<double>(d.h))), 1, d.h);
        std::vector<std::size_t> rows;
        if (spec.contiguous_rows) {
          std::uniform_int_distribution<std::size_t> start(0, d.h - n);
          const std::size_t s = start(pick);
          for (std::size_t r = s; r < s + n; ++r) rows.push_back(r);
        } else {
          rows = choose(d.h, n, pick);
        }
        for (std::size_t r : rows) {
          mask.hit[b * d.h + r] = 1;
          std::fill_n(out.cube.data().data() + b * d.plane() + r * d.w, d.w, 0.0f);
        }
      }
      out.mask = std::move(mask);
      break;
    }
    case DegradationKind::kDownsample:
      out.cube = bicubic_downsample(clean, spec.scale);
      break;
    case DegradationKind::kRealisticMix: {
      std::uniform_real_distribution<double> range(spec.sigma_min, spec.sigma_max);
      for (std::size_t b = 0; b < d.b; ++b) out.band_sigma.push_back(range(pick));
      for (std::size_t b = 0; b < d.b; ++b)
        add_gaussian(out.cube, b, d.plane(), out.band_sigma[b] * unit, noise);
      std::uniform_real_distribution<double> offset(-spec.stripe_amplitude * spec.peak,
                                                    spec.stripe_amplitude * spec.peak);
      for (std::size_t b : choose(d.b, fraction_count(d.b, spec.stripe_band_fraction), pick)) {
        for (std::size_t c : choose(d.w, fraction_count(d.w, spec.stripe_column_fraction), pick)) {
          const float o = static_cast<float>(offset(pick));
          for (std::size_t r = 0; r < d.h; ++r) out.cube.data()[b * d.plane() + r * d.w + c] += o;
        }
      }
      std::bernoulli_distribution hit(spec.impulse_density), salt(0.5);
      for (std::size_t b : choose(d.b, fraction_count(d.b, spec.impulse_band_fraction), pick)) {
        float* p = out.cube.data().data() + b * d.plane();
        for (std::size_t i = 0; i < d.plane(); ++i) {
          if (hit(noise)) p[i] = salt(noise) ? static_cast<float>(spec.peak) : 0.0f;
        }
      }
      break;
    }
  }
  if (spec.clip) {
    const float hi = static_cast<float>(spec.peak);
    for (float& v : out.cube.data()) v = std::clamp(v, 0.0f, hi);
  }
  return out;
}

}  // namespace fairhyp
