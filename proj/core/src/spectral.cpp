#include "fairhyp/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fairhyp/errors.hpp"

namespace fairhyp {

nlohmann::json BandCorrelation::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < bands; ++i) {
    rows.push_back(std::vector<double>(values.begin() + static_cast<long>(i * bands),
                                       values.begin() + static_cast<long>((i + 1) * bands)));
  }
  return {{"schema", 1}, {"bands", bands}, {"constant_bands", constant_bands}, {"matrix", rows}};
}

template <typename T>
BandCorrelation band_correlation(const Tensor<T>& cube) {
  if (cube.shape().rank() != 3) {
    throw ConfigError("band_correlation: expected a (B,H,W) cube, got " + cube.shape().to_string());
  }
  const std::size_t B = cube.shape()[0], n = cube.shape()[1] * cube.shape()[2];
  std::vector<double> centered(B * n);
  std::vector<double> norm(B);
  for (std::size_t b = 0; b < B; ++b) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += static_cast<double>(cube[b * n + i]);
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = static_cast<double>(cube[b * n + i]) - mean;
      centered[b * n + i] = v;
      ss += v * v;
    }
    norm[b] = ss;
  }
  BandCorrelation r;
  r.bands = B;
  r.values.assign(B * B, 0.0);
  for (std::size_t b = 0; b < B; ++b) {
    if (norm[b] == 0.0) r.constant_bands.push_back(b);
  }
  for (std::size_t i = 0; i < B; ++i) {
    if (norm[i] == 0.0) continue;
    r.values[i * B + i] = 1.0;
    for (std::size_t j = i + 1; j < B; ++j) {
      if (norm[j] == 0.0) continue;
      double sxy = 0.0;
      const double* a = centered.data() + i * n;
      const double* c = centered.data() + j * n;
      for (std::size_t t = 0; t < n; ++t) sxy += a[t] * c[t];
      const double v = std::clamp(sxy / std::sqrt(norm[i] * norm[j]), -1.0, 1.0);
      r.values[i * B + j] = r.values[j * B + i] = v;
    }
  }
  return r;
}

std::string to_string(Adequacy a) {
  switch (a) {
    case Adequacy::kLocal: return "local";
    case Adequacy::kModerate: return "moderate";
    case Adequacy::kLongRange: return "long-range";
    case Adequacy::kGlobal: return "global";
  }
  return "local";
}

Adequacy classify_adequacy(double normalized) {
  if (normalized < 2.0) return Adequacy::kLocal;
  if (normalized < 4.0) return Adequacy::kModerate;
  if (normalized < 8.0) return Adequacy::kLongRange;
  return Adequacy::kGlobal;
}

double adjacency_baseline(std::size_t k) {
  if (k == 0) throw ConfigError("adjacency_baseline: k must be >= 1");
  double total = 0.0;
  for (std::size_t t = 0; t < k; ++t) total += static_cast<double>(t / 2 + 1);
  return total / static_cast<double>(k);
}

nlohmann::json TopKProfile::to_json() const {
  std::vector<std::string> bands;
  for (auto a : adequacy) bands.push_back(to_string(a));
  return {{"schema", 1},       {"k", k},
          {"baseline", baseline}, {"distance", distance},
          {"normalized", normalized}, {"adequacy", bands},
          {"partners", partners}};
}

TopKProfile topk_distance(const BandCorrelation& corr, std::size_t k) {
  const std::size_t B = corr.bands;
  if (B < 2 || k < 1 || k > B - 1) {
    throw ConfigError("topk_distance: k = " + std::to_string(k) + " must lie in [1, " +
                      std::to_string(B > 0 ? B - 1 : 0) + "]");
  }
  TopKProfile p;
  p.k = k;
  p.baseline = adjacency_baseline(k);
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < B; ++i) {
    order.clear();
    for (std::size_t j = 0; j < B; ++j) {
      if (j != i) order.push_back(j);
    }
    const auto dist = [i](std::size_t j) { return j > i ? j - i : i - j; };
    std::partial_sort(order.begin(), order.begin() + static_cast<long>(k), order.end(),
                      [&](std::size_t a, std::size_t b) {
                        const double ca = std::abs(corr.at(i, a)), cb = std::abs(corr.at(i, b));
                        if (ca != cb) return ca > cb;
                        if (dist(a) != dist(b)) return dist(a) < dist(b);
                        return a < b;
                      });
    order.resize(k);
    double total = 0.0;
    for (std::size_t j : order) total += static_cast<double>(dist(j));
    const double d = total / static_cast<double>(k);
    p.distance.push_back(d);
    p.normalized.push_back(d / p.baseline);
    p.adequacy.push_back(classify_adequacy(d / p.baseline));
    p.partners.push_back(order);
  }
  return p;
}

template BandCorrelation band_correlation<float>(const Tensor<float>&);
template BandCorrelation band_correlation<double>(const Tensor<double>&);

}  // namespace fairhyp
