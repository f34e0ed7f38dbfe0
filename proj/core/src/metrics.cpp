#include "fairhyp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>

#include "fairhyp/errors.hpp"

namespace fairhyp {

namespace {

template <typename T>
void check_pair(const Tensor<T>& ref, const Tensor<T>& test, const char* what) {
  if (!(ref.shape() == test.shape())) {
    throw ConfigError(std::string(what) + ": shape mismatch " + ref.shape().to_string() +
                      " vs " + test.shape().to_string());
  }
  if (ref.size() == 0) throw ConfigError(std::string(what) + ": empty input");
}

template <typename T>
void check_cube(const Tensor<T>& t, const char* what) {
  if (t.shape().rank() != 3) {
    throw ConfigError(std::string(what) + ": expected a (B,H,W) cube, got " +
                      t.shape().to_string());
  }
}

// Correlates each row with `w` (length k), keeping only fully covered outputs.
void filter_rows(const std::vector<double>& in, std::size_t h, std::size_t w,
                 const std::vector<double>& k, std::vector<double>& out) {
  const std::size_t ow = w - k.size() + 1;
  out.assign(h * ow, 0.0);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < ow; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < k.size(); ++t) acc += k[t] * in[i * w + j + t];
      out[i * ow + j] = acc;
    }
}

void filter_cols(const std::vector<double>& in, std::size_t h, std::size_t w,
                 const std::vector<double>& k, std::vector<double>& out) {
  const std::size_t oh = h - k.size() + 1;
  out.assign(oh * w, 0.0);
  for (std::size_t i = 0; i < oh; ++i)
    for (std::size_t t = 0; t < k.size(); ++t) {
      const double kt = k[t];
      for (std::size_t j = 0; j < w; ++j) out[i * w + j] += kt * in[(i + t) * w + j];
    }
}

std::vector<double> window_1d(const SsimOptions& o) {
  std::vector<double> k(o.window, 1.0);
  if (o.kind == SsimWindow::kGaussian) {
    const double c = (static_cast<double>(o.window) - 1.0) / 2.0;
    for (std::size_t i = 0; i < o.window; ++i) {
      const double x = static_cast<double>(i) - c;
      k[i] = std::exp(-(x * x) / (2.0 * o.sigma * o.sigma));
    }
  }
  double total = 0.0;
  for (double v : k) total += v;
  for (double& v : k) v /= total;
  return k;
}

}  // namespace

std::string format_metric(double v, int precision) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

template <typename T>
double psnr(const Tensor<T>& ref, const Tensor<T>& test, double peak) {
  check_pair(ref, test, "psnr");
  if (!(peak > 0.0)) throw ConfigError("psnr: peak must be > 0");
  double sq = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const double d = static_cast<double>(ref[i]) - static_cast<double>(test[i]);
    sq += d * d;
  }
  const double mse = sq / static_cast<double>(ref.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

std::vector<double> ssim_window(const SsimOptions& options) {
  if (options.window < 2) throw ConfigError("ssim: window size must be >= 2");
  if (options.kind == SsimWindow::kGaussian && !(options.sigma > 0.0)) {
    throw ConfigError("ssim: Gaussian window sigma must be > 0");
  }
  const auto k = window_1d(options);
  std::vector<double> w(k.size() * k.size());
  for (std::size_t i = 0; i < k.size(); ++i)
    for (std::size_t j = 0; j < k.size(); ++j) w[i * k.size() + j] = k[i] * k[j];
  return w;
}

template <typename T>
double ssim(const Tensor<T>& ref, const Tensor<T>& test, double peak, const SsimOptions& options) {
  check_pair(ref, test, "ssim");
  check_cube(ref, "ssim");
  if (options.window < 2) throw ConfigError("ssim: window size must be >= 2");
  const std::size_t B = ref.shape()[0], H = ref.shape()[1], W = ref.shape()[2];
  if (options.window > std::min(H, W)) {
    throw ConfigError("ssim: window " + std::to_string(options.window) + " exceeds image size " +
                      std::to_string(H) + "x" + std::to_string(W));
  }
  ssim_window(options);  // validates
  const auto k = window_1d(options);
  const double c1 = (options.k1 * peak) * (options.k1 * peak);
  const double c2 = (options.k2 * peak) * (options.k2 * peak);
  const std::size_t plane = H * W;

  std::vector<double> x(plane), y(plane), prod(plane), tmp;
  std::vector<double> mx, my, sxx, syy, sxy;
  auto smooth = [&](const std::vector<double>& in, std::vector<double>& out) {
    filter_rows(in, H, W, k, tmp);
    filter_cols(tmp, H, W - k.size() + 1, k, out);
  };
  double total = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t i = 0; i < plane; ++i) {
      x[i] = static_cast<double>(ref[b * plane + i]);
      y[i] = static_cast<double>(test[b * plane + i]);
    }
    smooth(x, mx);
    smooth(y, my);
    for (std::size_t i = 0; i < plane; ++i) prod[i] = x[i] * x[i];
    smooth(prod, sxx);
    for (std::size_t i = 0; i < plane; ++i) prod[i] = y[i] * y[i];
    smooth(prod, syy);
    for (std::size_t i = 0; i < plane; ++i) prod[i] = x[i] * y[i];
    smooth(prod, sxy);
    double band = 0.0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double vx = sxx[i] - mx[i] * mx[i];
      const double vy = syy[i] - my[i] * my[i];
      const double cxy = sxy[i] - mx[i] * my[i];
      band += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cxy + c2)) /
              ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    total += band / static_cast<double>(mx.size());
  }
  return total / static_cast<double>(B);
}

template <typename T>
SamResult sam(const Tensor<T>& ref, const Tensor<T>& test) {
  check_pair(ref, test, "sam");
  check_cube(ref, "sam");
  const std::size_t B = ref.shape()[0], plane = ref.shape()[1] * ref.shape()[2];
  SamResult r;
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t p = 0; p < plane; ++p) {
    double dot = 0.0, nr = 0.0, nt = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
      const double a = static_cast<double>(ref[b * plane + p]);
      const double c = static_cast<double>(test[b * plane + p]);
      dot += a * c;
      nr += a * a;
      nt += c * c;
    }
    if (nr == 0.0 || nt == 0.0) {
      ++r.skipped;
      continue;
    }
    total += std::acos(std::clamp(dot / (std::sqrt(nr) * std::sqrt(nt)), -1.0, 1.0));
    ++counted;
  }
  if (counted == 0) throw ConfigError("sam: every pixel has a zero-norm spectrum");
  r.mean_radians = total / static_cast<double>(counted);
  return r;
}

template <typename T>
double mae(const Tensor<T>& ref, const Tensor<T>& test) {
  check_pair(ref, test, "mae");
  double total = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i)
    total += std::abs(static_cast<double>(ref[i]) - static_cast<double>(test[i]));
  return total / static_cast<double>(ref.size());
}

nlohmann::json RestorationScores::to_json() const {
  auto num = [](double v) -> nlohmann::json {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
  };
  return {{"peak", peak},
          {"psnr_db", num(psnr)},
          {"ssim", ssim},
          {"sam_rad", sam.mean_radians},
          {"sam_x100", sam.display()},
          {"sam_skipped_pixels", sam.skipped},
          {"mae", mae},
          {"mae_x1000", mae * 1000.0}};
}

template <typename T>
RestorationScores evaluate_restoration(const Tensor<T>& ref, const Tensor<T>& test, double peak,
                                       const SsimOptions& options) {
  RestorationScores s;
  s.peak = peak;
  s.psnr = psnr(ref, test, peak);
  s.ssim = ssim(ref, test, peak, options);
  s.sam = sam(ref, test);
  s.mae = mae(ref, test);
  return s;
}

std::string format_restoration_table(const std::vector<std::string>& names,
                                     const std::vector<RestorationScores>& rows) {
  std::size_t name_w = 4;
  for (const auto& n : names) name_w = std::max(name_w, n.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(name_w)) << "name" << std::right
     << std::setw(10) << "PSNR" << std::setw(10) << "SSIM" << std::setw(10) << "SAM"
     << std::setw(10) << "MAE" << '\n';
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    os << std::left << std::setw(static_cast<int>(name_w)) << (i < names.size() ? names[i] : "")
       << std::right << std::setw(10) << format_metric(r.psnr, 2) << std::setw(10)
       << format_metric(r.ssim, 4) << std::setw(10) << format_metric(r.sam.display(), 2)
       << std::setw(10) << format_metric(r.mae * 1000.0, 2) << '\n';
  }
  return os.str();
}

ConfusionMatrix::ConfusionMatrix(std::size_t classes)
    : classes_(classes), counts_(classes * classes, 0) {
  if (classes == 0) throw ConfigError("confusion matrix: need at least one class");
}

ConfusionMatrix ConfusionMatrix::from_counts(
    const std::vector<std::vector<std::uint64_t>>& counts) {
  ConfusionMatrix cm(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (counts[i].size() != counts.size()) {
      throw ConfigError("confusion matrix: counts must be square");
    }
    for (std::size_t j = 0; j < counts.size(); ++j) cm.add(i, j, counts[i][j]);
  }
  return cm;
}

void ConfusionMatrix::add(std::size_t truth, std::size_t predicted, std::uint64_t n) {
  if (truth >= classes_ || predicted >= classes_) {
    throw ConfigError("confusion matrix: class index out of range");
  }
  counts_[truth * classes_ + predicted] += n;
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t n = 0;
  for (auto c : counts_) n += c;
  return n;
}

nlohmann::json ClassScores::to_json() const { return {{"oa", oa}, {"aa", aa}, {"kappa", kappa}}; }

ClassScores classify_scores(const ConfusionMatrix& cm) {
  const std::size_t K = cm.classes();
  const std::uint64_t total = cm.total();
  if (total == 0) throw ConfigError("classify_scores: confusion matrix is empty");
  const double n = static_cast<double>(total);
  std::uint64_t diag = 0;
  double aa = 0.0, pe = 0.0;
  std::size_t supported = 0;
  for (std::size_t i = 0; i < K; ++i) {
    std::uint64_t row = 0, col = 0;
    for (std::size_t j = 0; j < K; ++j) {
      row += cm.at(i, j);
      col += cm.at(j, i);
    }
    diag += cm.at(i, i);
    if (row > 0) {
      aa += static_cast<double>(cm.at(i, i)) / static_cast<double>(row);
      ++supported;
    }
    pe += static_cast<double>(row) * static_cast<double>(col);
  }
  pe /= n * n;
  ClassScores s;
  s.oa = static_cast<double>(diag) / n;
  s.aa = aa / static_cast<double>(supported);
  if (pe == 1.0) {
    if (s.oa != 1.0) throw NumericError("classify_scores: kappa undefined (chance agreement is 1)");
    s.kappa = 1.0;
  } else {
    s.kappa = (s.oa - pe) / (1.0 - pe);
  }
  return s;
}

#define FAIRHYP_INSTANTIATE(T)                                                                \
  template double psnr<T>(const Tensor<T>&, const Tensor<T>&, double);                       \
  template double ssim<T>(const Tensor<T>&, const Tensor<T>&, double, const SsimOptions&);   \
  template SamResult sam<T>(const Tensor<T>&, const Tensor<T>&);                             \
  template double mae<T>(const Tensor<T>&, const Tensor<T>&);                                \
  template RestorationScores evaluate_restoration<T>(const Tensor<T>&, const Tensor<T>&,     \
                                                     double, const SsimOptions&);

FAIRHYP_INSTANTIATE(float)
FAIRHYP_INSTANTIATE(double)

#undef FAIRHYP_INSTANTIATE

}  // namespace fairhyp
