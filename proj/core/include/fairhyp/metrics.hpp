#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fairhyp/tensor.hpp"

namespace fairhyp {

/// 10 log10(peak^2 / MSE) over every element; +inf when the inputs are equal.
template <typename T>
double psnr(const Tensor<T>& ref, const Tensor<T>& test, double peak);

enum class SsimWindow { kGaussian, kUniform };

struct SsimOptions {
  std::size_t window = 11;
  double sigma = 1.5;  // Gaussian window only
  SsimWindow kind = SsimWindow::kGaussian;
  double k1 = 0.01, k2 = 0.03;
};

/// Mean SSIM of (B,H,W) cubes: per band over every fully contained window,
/// then averaged across bands.
template <typename T>
double ssim(const Tensor<T>& ref, const Tensor<T>& test, double peak,
            const SsimOptions& options = {});

/// Normalized window weights (window x window, row-major).
std::vector<double> ssim_window(const SsimOptions& options);

struct SamResult {
  double mean_radians = 0.0;
  /// Pixels where either spectrum has zero norm.
  std::size_t skipped = 0;
  /// Display convention: radians x 100.
  double display() const { return mean_radians * 100.0; }
};

template <typename T>
SamResult sam(const Tensor<T>& ref, const Tensor<T>& test);

/// Mean absolute error; display convention is x 1000.
template <typename T>
double mae(const Tensor<T>& ref, const Tensor<T>& test);

struct RestorationScores {
  double psnr = 0.0;
  double ssim = 0.0;
  SamResult sam;
  double mae = 0.0;
  double peak = 1.0;

  nlohmann::json to_json() const;
};

template <typename T>
RestorationScores evaluate_restoration(const Tensor<T>& ref, const Tensor<T>& test, double peak,
                                       const SsimOptions& options = {});

/// Aligned text table in the order PSNR, SSIM, SAM, MAE.
std::string format_restoration_table(const std::vector<std::string>& names,
                                     const std::vector<RestorationScores>& rows);

/// Row = ground truth, column = prediction.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t classes);
  static ConfusionMatrix from_counts(const std::vector<std::vector<std::uint64_t>>& counts);

  void add(std::size_t truth, std::size_t predicted, std::uint64_t n = 1);
  std::size_t classes() const { return classes_; }
  std::uint64_t at(std::size_t truth, std::size_t predicted) const {
    return counts_[truth * classes_ + predicted];
  }
  std::uint64_t total() const;

 private:
  std::size_t classes_;
  std::vector<std::uint64_t> counts_;
};

struct ClassScores {
  double oa = 0.0, aa = 0.0, kappa = 0.0;
  nlohmann::json to_json() const;
};

/// Overall accuracy, mean per-class accuracy over classes with support, and
/// Cohen's kappa.
ClassScores classify_scores(const ConfusionMatrix& cm);

/// "inf" for infinities, fixed precision otherwise.
std::string format_metric(double v, int precision);

}  // namespace fairhyp
