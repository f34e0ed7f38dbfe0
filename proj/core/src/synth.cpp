#include "fairhyp/synth.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "fairhyp/errors.hpp"
#include "fairhyp/rng.hpp"

namespace fairhyp {

std::string to_string(SynthKind kind) {
  switch (kind) {
    case SynthKind::kGradient: return "gradient";
    case SynthKind::kBlobs: return "blobs";
    case SynthKind::kPeriodicSpectra: return "periodic-spectra";
    case SynthKind::kLabeledRegions: return "labeled-regions";
  }
  return "blobs";
}

SynthKind synth_kind_from_string(const std::string& s) {
  for (auto k : {SynthKind::kGradient, SynthKind::kBlobs, SynthKind::kPeriodicSpectra,
                 SynthKind::kLabeledRegions}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("unknown synthetic kind '" + s +
                    "' (expected gradient, blobs, periodic-spectra, labeled-regions)");
}

void SynthOptions::validate() const {
  if (bands == 0 || height == 0 || width == 0) throw ConfigError("synth: dims must be positive");
  if (enforce_limits && (bands > 64 || height > 128 || width > 128)) {
    throw ConfigError("synth: dims " + std::to_string(bands) + "x" + std::to_string(height) +
                      "x" + std::to_string(width) + " exceed the default limit 64x128x128");
  }
  if (kind == SynthKind::kPeriodicSpectra && (period == 0 || period > bands)) {
    throw ConfigError("synth: period must lie in [1, bands]");
  }
  if (kind == SynthKind::kLabeledRegions && (classes < 1 || classes > height * width)) {
    throw ConfigError("synth: classes must lie in [1, H*W]");
  }
  if (kind == SynthKind::kBlobs && materials == 0) {
    throw ConfigError("synth: materials must be >= 1");
  }
}

std::vector<double> smooth_spectrum(std::size_t bands, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> centre(-0.2, 1.2), width(0.1, 0.5), height(-1.0, 1.0);
  double c[3], w[3], a[3];
  for (int k = 0; k < 3; ++k) {
    c[k] = centre(rng);
    w[k] = width(rng);
    a[k] = height(rng);
  }
  std::vector<double> s(bands);
  for (std::size_t b = 0; b < bands; ++b) {
    const double x = bands > 1 ? static_cast<double>(b) / static_cast<double>(bands - 1) : 0.5;
    double v = 0.0;
    for (int k = 0; k < 3; ++k) v += a[k] * std::exp(-(x - c[k]) * (x - c[k]) / (2 * w[k] * w[k]));
    s[b] = v;
  }
  const auto [lo, hi] = std::minmax_element(s.begin(), s.end());
  const double l = *lo, span = *hi - *lo;
  std::uniform_real_distribution<double> floor(0.1, 0.4), top(0.6, 0.9);
  const double f = floor(rng), t = top(rng);
  for (double& v : s) v = span > 0 ? f + (t - f) * (v - l) / span : 0.5 * (f + t);
  return s;
}

SynthResult synth_dataset(const SynthOptions& o) {
  o.validate();
  const std::size_t B = o.bands, H = o.height, W = o.width, P = H * W;
  SynthResult r;
  r.cube = Tensor<float>(Shape{B, H, W});
  float* out = r.cube.data().data();
  auto material = [&](std::size_t k) {
    return smooth_spectrum(B, derive_seed(o.seed, hash_name("material"), k));
  };

  switch (o.kind) {
    case SynthKind::kGradient: {
      const auto e0 = material(0), e1 = material(1);
      for (std::size_t i = 0; i < H; ++i)
        for (std::size_t j = 0; j < W; ++j) {
          const double t = 0.5 * ((H > 1 ? double(i) / double(H - 1) : 0.0) +
                                  (W > 1 ? double(j) / double(W - 1) : 0.0));
          for (std::size_t b = 0; b < B; ++b)
            out[b * P + i * W + j] = static_cast<float>((1.0 - t) * e0[b] + t * e1[b]);
        }
      break;
    }
    case SynthKind::kBlobs: {
      Rng rng(derive_seed(o.seed, hash_name("blobs")));
      std::uniform_real_distribution<double> pos(0.0, 1.0), radius(0.1, 0.3);
      const std::size_t K = o.materials;
      std::vector<std::vector<double>> e;
      for (std::size_t k = 0; k <= K; ++k) e.push_back(material(k));
      std::vector<double> cy(K), cx(K), rad(K);
      for (std::size_t k = 0; k < K; ++k) {
        cy[k] = pos(rng) * double(H);
        cx[k] = pos(rng) * double(W);
        rad[k] = radius(rng) * double(std::max(H, W));
      }
      std::vector<double> a(K + 1);
      for (std::size_t i = 0; i < H; ++i)
        for (std::size_t j = 0; j < W; ++j) {
          a[K] = 0.2;  // background material
          double total = a[K];
          for (std::size_t k = 0; k < K; ++k) {
            const double dy = double(i) - cy[k], dx = double(j) - cx[k];
            a[k] = std::exp(-(dy * dy + dx * dx) / (2.0 * rad[k] * rad[k]));
            total += a[k];
          }
          for (std::size_t b = 0; b < B; ++b) {
            double v = 0.0;
            for (std::size_t k = 0; k <= K; ++k) v += a[k] * e[k][b];
            out[b * P + i * W + j] = static_cast<float>(v / total);
          }
        }
      break;
    }
    case SynthKind::kPeriodicSpectra: {
      Rng rng(derive_seed(o.seed, hash_name("periodic")));
      std::uniform_real_distribution<float> value(0.05f, 0.95f);
      for (std::size_t f = 0; f < o.period; ++f)
        for (std::size_t i = 0; i < P; ++i) out[f * P + i] = value(rng);
      for (std::size_t b = o.period; b < B; ++b)
        std::copy_n(out + (b % o.period) * P, P, out + b * P);
      break;
    }
    case SynthKind::kLabeledRegions: {
      Rng rng(derive_seed(o.seed, hash_name("regions")));
      std::uniform_int_distribution<std::size_t> pixel(0, P - 1);
      std::set<std::size_t> used;
      std::vector<std::size_t> seeds;
      while (seeds.size() < o.classes) {
        const std::size_t p = pixel(rng);
        if (used.insert(p).second) seeds.push_back(p);
      }
      r.labels.assign(P, 0);
      for (std::size_t p = 0; p < P; ++p) {
        const double y = double(p / W), x = double(p % W);
        double best = 1e300;
        for (std::size_t k = 0; k < seeds.size(); ++k) {
          const double dy = y - double(seeds[k] / W), dx = x - double(seeds[k] % W);
          const double d = dy * dy + dx * dx;
          if (d < best) {
            best = d;
            r.labels[p] = static_cast<std::uint32_t>(k);
          }
        }
      }
      std::vector<std::vector<double>> e;
      for (std::size_t k = 0; k < o.classes; ++k) e.push_back(material(k));
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t p = 0; p < P; ++p) out[b * P + p] = static_cast<float>(e[r.labels[p]][b]);
      break;
    }
  }
  return r;
}

}  // namespace fairhyp
