#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fairhyp/tensor.hpp"

namespace fairhyp {

enum class DegradationKind { kGaussian, kBlindGaussian, kDeadline, kDownsample, kRealisticMix };

/// Degradation recipe. Noise levels are in 8-bit units: the applied standard
/// deviation is sigma * peak / 255.
struct DegradationSpec {
  DegradationKind kind = DegradationKind::kGaussian;
  double peak = 1.0;
  std::uint64_t seed = 0;
  /// Clamp the result to [0, peak].
  bool clip = false;

  // gaussian
  double sigma = 30.0;
  // blind_gaussian: one sigma per band, drawn from `sigma_set` when non-empty,
  // otherwise uniformly from [sigma_min, sigma_max].
  std::vector<double> sigma_set{30.0, 50.0, 70.0};
  double sigma_min = 10.0, sigma_max = 70.0;
  // deadline
  double band_fraction = 1.0 / 3.0;
  double row_fraction_min = 0.10, row_fraction_max = 0.30;
  bool contiguous_rows = false;
  // downsample
  std::size_t scale = 4;
  // realistic_mix: per-band gaussian in [sigma_min, sigma_max], additive column
  // stripes on a fraction of bands, salt-and-pepper impulses on a fraction of bands.
  double stripe_band_fraction = 0.3;
  double stripe_column_fraction = 0.1;
  double stripe_amplitude = 0.1;  // fraction of peak
  double impulse_band_fraction = 0.3;
  double impulse_density = 0.05;

  void validate() const;
  nlohmann::json to_json() const;
  static DegradationSpec from_json(const nlohmann::json& j);
};

std::string to_string(DegradationKind kind);
DegradationKind degradation_kind_from_string(const std::string& s);

/// Rows zeroed per band by deadline noise.
struct BandRowMask {
  std::size_t bands = 0, rows = 0;
  std::vector<std::uint8_t> hit;  // bands * rows, row-major

  bool at(std::size_t b, std::size_t r) const { return hit[b * rows + r] != 0; }
  std::size_t masked_bands() const;
};

struct Degraded {
  Tensor<float> cube;
  std::optional<BandRowMask> mask;
  /// Sigma drawn for each band (gaussian family), in 8-bit units.
  std::vector<double> band_sigma;
};

/// Applies `spec` to a clean (B,H,W) cube. Deterministic in (clean, spec).
Degraded degrade(const Tensor<float>& clean, const DegradationSpec& spec);

/// Antialiased bicubic (a = -0.5) reduction of H and W by `scale`, using
/// kernel weights normalized per output sample and symmetric borders.
Tensor<float> bicubic_downsample(const Tensor<float>& cube, std::size_t scale);

/// Catmull-Rom style cubic kernel with parameter a.
double cubic_kernel(double x, double a = -0.5);

}  // namespace fairhyp
