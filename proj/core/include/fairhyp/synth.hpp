#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fairhyp/tensor.hpp"

namespace fairhyp {

enum class SynthKind { kGradient, kBlobs, kPeriodicSpectra, kLabeledRegions };

std::string to_string(SynthKind kind);
/// Throws ConfigError for unknown names.
SynthKind synth_kind_from_string(const std::string& s);

struct SynthOptions {
  SynthKind kind = SynthKind::kBlobs;
  std::size_t bands = 31, height = 64, width = 64;
  std::uint64_t seed = 0;
  /// periodic-spectra: band i is an exact copy of band i mod period.
  std::size_t period = 10;
  /// labeled-regions: number of classes.
  std::size_t classes = 4;
  /// blobs: number of mixed materials.
  std::size_t materials = 4;
  /// Reject cubes beyond B 64 or H, W 128.
  bool enforce_limits = true;

  void validate() const;
};

struct SynthResult {
  /// (B,H,W), values in [0, 1].
  Tensor<float> cube;
  /// labeled-regions only: class per pixel, row-major (H*W).
  std::vector<std::uint32_t> labels;
};

/// Deterministic synthetic cube.
///   gradient          two smooth material spectra mixed along a diagonal ramp
///   blobs             Gaussian abundance blobs over smooth material spectra
///   periodic-spectra  `period` independent noise fields repeated along bands
///   labeled-regions   Voronoi regions, one constant spectrum per class
SynthResult synth_dataset(const SynthOptions& options);

/// Smooth spectrum in [0.1, 0.9]: a sum of three random Gaussian bumps.
std::vector<double> smooth_spectrum(std::size_t bands, std::uint64_t seed);

}  // namespace fairhyp
