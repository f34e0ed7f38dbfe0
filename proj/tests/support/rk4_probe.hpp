#pragma once

// Reads the stage-combination weights back out of a learnable adapter.
//
// With one band, a 1x1 image and leaky slope 1 every stage is linear:
// F_t(y) = lambda_t * y (the centre taps of its two convs multiply). Every
// other weight is zero and the steps h2..h4 are 1, so the pre-gate output is
// x + sum_i c_i k_i with the k_i visible on the trace.

#include <array>
#include <cmath>

#include "fairhyp/rk4sva.hpp"

namespace oracle {

inline fairhyp::Rk4Sva linear_adapter() {
  fairhyp::Rk4SvaConfig cfg;
  cfg.bands = 1;
  cfg.ref_channels = 1;
  cfg.leaky_slope = 1.0;
  return fairhyp::Rk4Sva("probe", cfg);
}

struct AdapterProbe {
  std::array<double, 4> k;
  double y_hat;
};

inline AdapterProbe run_linear_adapter(const fairhyp::Rk4Sva& m,
                                       const std::array<double, 4>& lambda, double x0) {
  fairhyp::ParamStore<double> store;
  m.init(store);
  m.set_identity(store);
  const std::size_t centre = (m.config().kernel_h / 2) * m.config().kernel_w + m.config().kernel_w / 2;
  for (int t = 1; t <= 4; ++t) {
    store.value(m.stage_conv(t, 0).weight_name())[centre] = 1.0;
    store.value(m.stage_conv(t, 1).weight_name())[centre] = lambda[t - 1];
  }
  fairhyp::Tape<double> tape(&store);
  const auto x = tape.input(fairhyp::Tensor<double>(fairhyp::Shape{1, 1, 1, 1}, x0));
  const auto tr = m.forward_trace(tape, x);
  AdapterProbe p;
  for (int i = 0; i < 4; ++i) p.k[i] = tape.value(tr.k[i])[0];
  p.y_hat = tape.value(tr.y_hat)[0];
  return p;
}

/// Solves for c in y_hat - x = sum c_i k_i from four tied probes (all stages
/// share lambda, a different lambda per probe).
inline std::array<double, 4> extract_tied_coefficients(const fairhyp::Rk4Sva& m) {
  const double lambdas[4] = {0.5, -0.75, 1.25, 2.0};
  const double x0 = 1.0;
  double a[4][5];
  for (int r = 0; r < 4; ++r) {
    const double l = lambdas[r];
    const auto p = run_linear_adapter(m, {l, l, l, l}, x0);
    for (int c = 0; c < 4; ++c) a[r][c] = p.k[c];
    a[r][4] = p.y_hat - x0;
  }
  // Gaussian elimination with partial pivoting.
  for (int col = 0; col < 4; ++col) {
    int piv = col;
    for (int r = col + 1; r < 4; ++r)
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    for (int c = 0; c < 5; ++c) std::swap(a[col][c], a[piv][c]);
    for (int r = 0; r < 4; ++r) {
      if (r == col) continue;
      const double f = a[r][col] / a[col][col];
      for (int c = col; c < 5; ++c) a[r][c] -= f * a[col][c];
    }
  }
  std::array<double, 4> out;
  for (int i = 0; i < 4; ++i) out[i] = a[i][4] / a[i][i];
  return out;
}

/// Isolates each weight by giving only stage i a non-zero lambda (= 1):
/// then k_i = x and every other k is zero, so (y_hat - x) / x = c_i.
inline std::array<double, 4> extract_isolated_coefficients(const fairhyp::Rk4Sva& m) {
  std::array<double, 4> out;
  const double x0 = 6.0;
  for (int i = 0; i < 4; ++i) {
    std::array<double, 4> lambda{0, 0, 0, 0};
    lambda[i] = 1.0;
    const auto p = run_linear_adapter(m, lambda, x0);
    out[i] = (p.y_hat - x0) / x0;
  }
  return out;
}

/// Global error of n steps of the reference integrator on y' = -y, y(0) = 1.
inline double rk4_global_error(double h) {
  const int n = static_cast<int>(std::lround(1.0 / h));
  double y = 1.0, t = 0.0;
  for (int i = 0; i < n; ++i) {
    y = fairhyp::rk4_reference_step([](double, double v) { return -v; }, t, y, h);
    t += h;
  }
  return std::abs(y - std::exp(-1.0));
}

/// Least-squares slope of log(error) against log(h).
inline double rk4_convergence_slope(const std::array<double, 4>& hs) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (double h : hs) {
    const double x = std::log(h), y = std::log(rk4_global_error(h));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double n = static_cast<double>(hs.size());
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace oracle
