#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fairhyp/tensor.hpp"

namespace fairhyp {

/// Pearson correlation of every band pair over all pixels.
struct BandCorrelation {
  std::size_t bands = 0;
  std::vector<double> values;  // bands x bands, symmetric
  /// Zero-variance bands; their rows and columns are 0.
  std::vector<std::size_t> constant_bands;

  double at(std::size_t i, std::size_t j) const { return values[i * bands + j]; }
  nlohmann::json to_json() const;
};

template <typename T>
BandCorrelation band_correlation(const Tensor<T>& cube);

enum class Adequacy { kLocal, kModerate, kLongRange, kGlobal };

std::string to_string(Adequacy a);
/// < 2 local, [2, 4) moderate, [4, 8) long-range, >= 8 global.
Adequacy classify_adequacy(double normalized);

struct TopKProfile {
  std::size_t k = 0;
  /// Mean |i - j| over the k partners of each band.
  std::vector<double> distance;
  double baseline = 0.0;
  std::vector<double> normalized;
  std::vector<Adequacy> adequacy;
  /// Chosen partners per band, best first.
  std::vector<std::vector<std::size_t>> partners;

  nlohmann::json to_json() const;
};

/// Mean distance of the k nearest neighbors of a band with neighbors on both
/// sides (offsets 1, 1, 2, 2, ...).
double adjacency_baseline(std::size_t k);

/// For each band, the k other bands with the largest |corr|; ties go to the
/// smaller |i - j|, then the smaller index.
TopKProfile topk_distance(const BandCorrelation& corr, std::size_t k);

}  // namespace fairhyp
