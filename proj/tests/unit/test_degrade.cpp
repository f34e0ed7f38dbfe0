#include <doctest.h>

#include <cmath>
#include <set>

#include "fairhyp/degrade.hpp"
#include "fairhyp/errors.hpp"
#include "fairhyp/metrics.hpp"
#include "fairhyp/synth.hpp"
#include "oracles.hpp"

using namespace fairhyp;

namespace {

Tensor<float> clean_cube(std::size_t B, std::size_t H, std::size_t W, double peak, std::uint64_t seed = 1) {
  SynthOptions o;
  o.bands = B;
  o.height = H;
  o.width = W;
  o.seed = seed;
  o.enforce_limits = false;
  auto c = synth_dataset(o).cube;
  for (float& v : c.data()) v = static_cast<float>(v * peak);
  return c;
}

DegradationSpec gaussian(double sigma, double peak, std::uint64_t seed = 0) {
  DegradationSpec s;
  s.kind = DegradationKind::kGaussian;
  s.sigma = sigma;
  s.peak = peak;
  s.seed = seed;
  return s;
}

double plane_std(const Tensor<float>& a, const Tensor<float>& b, std::size_t band) {
  const std::size_t P = a.shape()[1] * a.shape()[2];
  double m = 0, q = 0;
  for (std::size_t i = 0; i < P; ++i) m += double(a[band * P + i]) - double(b[band * P + i]);
  m /= double(P);
  for (std::size_t i = 0; i < P; ++i) {
    const double d = double(a[band * P + i]) - double(b[band * P + i]) - m;
    q += d * d;
  }
  return std::sqrt(q / double(P - 1));
}

}  // namespace

TEST_CASE("zero sigma leaves the cube unchanged") {
  const auto c = clean_cube(4, 8, 8, 1.0);
  CHECK(oracle::bit_equal(degrade(c, gaussian(0.0, 1.0)).cube, c));
}

TEST_CASE("noise-floor PSNR at 8-bit scale") {
  const auto c = clean_cube(31, 128, 128, 255.0);
  const double want[] = {18.59, 14.15, 11.23};
  const double sig[] = {30, 50, 70};
  double prev = 1e9;
  for (int i = 0; i < 3; ++i) {
    const double p = psnr(c, degrade(c, gaussian(sig[i], 255.0, 7)).cube, 255.0);
    CHECK(std::abs(p - want[i]) <= 0.05);
    CHECK(std::abs(p - 20 * std::log10(255.0 / sig[i])) <= 0.05);
    CHECK(p < prev);
    prev = p;
  }
  // Same sigma on normalized data gives the same PSNR.
  const auto n = clean_cube(31, 128, 128, 1.0);
  CHECK(std::abs(psnr(n, degrade(n, gaussian(30, 1.0, 7)).cube, 1.0) - 18.59) <= 0.05);
}

TEST_CASE("seed determinism") {
  const auto c = clean_cube(6, 16, 16, 1.0);
  for (auto kind : {DegradationKind::kGaussian, DegradationKind::kBlindGaussian,
                    DegradationKind::kDeadline, DegradationKind::kRealisticMix}) {
    DegradationSpec s;
    s.kind = kind;
    s.seed = 42;
    const auto a = degrade(c, s), b = degrade(c, s);
    CHECK(oracle::bit_equal(a.cube, b.cube));
    s.seed = 43;
    CHECK_FALSE(oracle::bit_equal(a.cube, degrade(c, s).cube));
  }
}

TEST_CASE("blind gaussian draws one sigma per band") {
  const auto c = clean_cube(12, 128, 128, 1.0);
  DegradationSpec s;
  s.kind = DegradationKind::kBlindGaussian;
  s.seed = 3;
  const auto d = degrade(c, s);
  REQUIRE(d.band_sigma.size() == 12);
  std::set<double> seen;
  for (std::size_t b = 0; b < 12; ++b) {
    const double sigma = d.band_sigma[b];
    CHECK((sigma == 30.0 || sigma == 50.0 || sigma == 70.0));
    seen.insert(sigma);
    CHECK(std::abs(plane_std(d.cube, c, b) / (sigma / 255.0) - 1.0) < 0.03);
  }
  CHECK(seen.size() > 1);

  s.sigma_set.clear();
  const auto r = degrade(c, s);
  for (std::size_t b = 0; b < 12; ++b) {
    CHECK(r.band_sigma[b] >= 10.0);
    CHECK(r.band_sigma[b] <= 70.0);
    CHECK(std::abs(plane_std(r.cube, c, b) / (r.band_sigma[b] / 255.0) - 1.0) < 0.03);
  }
}

TEST_CASE("deadline masks a third of the bands") {
  const auto c = clean_cube(162, 8, 8, 1.0);
  DegradationSpec s;
  s.kind = DegradationKind::kDeadline;
  const auto d = degrade(c, s);
  REQUIRE(d.mask);
  CHECK(d.mask->masked_bands() == 54);

  const auto big = clean_cube(9, 100, 12, 1.0, 2);
  for (bool contiguous : {false, true}) {
    s.contiguous_rows = contiguous;
    s.seed = 5;
    const auto m = degrade(big, s);
    CHECK(m.mask->masked_bands() == 3);
    for (std::size_t b = 0; b < 9; ++b) {
      std::vector<std::size_t> rows;
      for (std::size_t r = 0; r < 100; ++r) {
        if (!m.mask->at(b, r)) continue;
        rows.push_back(r);
        for (std::size_t w = 0; w < 12; ++w) CHECK(m.cube[(b * 100 + r) * 12 + w] == 0.0f);
      }
      if (rows.empty()) continue;
      CHECK(rows.size() >= 10);
      CHECK(rows.size() <= 30);
      if (contiguous) CHECK(rows.back() - rows.front() + 1 == rows.size());
    }
    // Unmasked entries are untouched.
    for (std::size_t b = 0; b < 9; ++b)
      for (std::size_t r = 0; r < 100; ++r)
        if (!m.mask->at(b, r))
          for (std::size_t w = 0; w < 12; ++w)
            CHECK(m.cube[(b * 100 + r) * 12 + w] == big[(b * 100 + r) * 12 + w]);
  }
}

TEST_CASE("bicubic kernel and downsampling") {
  CHECK(cubic_kernel(0.0) == 1.0);
  CHECK(cubic_kernel(1.0) == 0.0);
  CHECK(cubic_kernel(2.0) == 0.0);
  CHECK(cubic_kernel(2.5) == 0.0);
  CHECK(cubic_kernel(0.5) == doctest::Approx(0.5625));
  CHECK(cubic_kernel(1.5) == doctest::Approx(-0.0625));
  CHECK(cubic_kernel(-0.5) == cubic_kernel(0.5));

  const Tensor<float> flat(Shape{3, 32, 16}, 0.375f);
  for (std::size_t s : {4u, 8u}) {
    const auto y = bicubic_downsample(flat, s);
    CHECK(y.shape() == Shape{3, 32 / s, 16 / s});
    for (float v : y.data()) CHECK(v == doctest::Approx(0.375f).epsilon(1e-6));
  }
  // A linear ramp is reproduced at the output sample centres away from the borders.
  Tensor<float> ramp(Shape{1, 64, 64});
  for (std::size_t i = 0; i < 64; ++i)
    for (std::size_t j = 0; j < 64; ++j) ramp[i * 64 + j] = 0.01f * float(j) + 0.02f * float(i);
  const auto y = bicubic_downsample(ramp, 4);
  for (std::size_t i = 3; i < 13; ++i)
    for (std::size_t j = 3; j < 13; ++j) {
      const double ci = 4.0 * double(i) + 1.5, cj = 4.0 * double(j) + 1.5;
      CHECK(y[i * 16 + j] == doctest::Approx(0.01 * cj + 0.02 * ci).epsilon(1e-5));
    }
  CHECK_THROWS_AS(bicubic_downsample(flat, 3), ConfigError);
  CHECK_THROWS_AS(bicubic_downsample(Tensor<float>(Shape{1, 30, 16}), 4), ConfigError);
}

TEST_CASE("downsample through the spec") {
  DegradationSpec s;
  s.kind = DegradationKind::kDownsample;
  s.scale = 8;
  const auto c = clean_cube(2, 64, 32, 1.0);
  CHECK(degrade(c, s).cube.shape() == Shape{2, 8, 4});
  s.scale = 5;
  CHECK_THROWS_AS(degrade(c, s), ConfigError);
}

TEST_CASE("clipping is opt-in") {
  const auto c = clean_cube(4, 32, 32, 1.0);
  auto s = gaussian(70, 1.0, 1);
  const auto raw = degrade(c, s).cube;
  bool outside = false;
  for (float v : raw.data()) outside |= v < 0.0f || v > 1.0f;
  CHECK(outside);
  s.clip = true;
  for (float v : degrade(c, s).cube.data()) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
}

TEST_CASE("realistic mixture stays a labeled stand-in") {
  const auto c = clean_cube(10, 32, 32, 1.0);
  DegradationSpec s;
  s.kind = DegradationKind::kRealisticMix;
  s.seed = 2;
  const auto d = degrade(c, s);
  CHECK(d.band_sigma.size() == 10);
  std::size_t impulses = 0;
  for (float v : d.cube.data()) impulses += (v == 0.0f || v == 1.0f);
  CHECK(impulses > 0);
}

TEST_CASE("spec validation and JSON") {
  DegradationSpec s;
  s.peak = 100;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = {};
  s.band_fraction = 0.0;
  s.kind = DegradationKind::kDeadline;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = {};
  s.kind = DegradationKind::kDownsample;
  s.scale = 2;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = {};
  s.kind = DegradationKind::kDeadline;
  s.row_fraction_min = 0.4;
  CHECK_THROWS_AS(s.validate(), ConfigError);

  DegradationSpec t;
  t.kind = DegradationKind::kBlindGaussian;
  t.sigma_set = {10, 20};
  t.seed = 77;
  t.clip = true;
  const auto j = t.to_json();
  CHECK(j.at("schema") == 1);
  CHECK(DegradationSpec::from_json(j).to_json() == j);
  auto bad = j;
  bad["sgima"] = 3;
  CHECK_THROWS_AS(DegradationSpec::from_json(bad), ConfigError);
  CHECK(degradation_kind_from_string("deadline") == DegradationKind::kDeadline);
  CHECK_THROWS_AS(degradation_kind_from_string("poisson"), ConfigError);

  // Clean values must lie in the declared range.
  Tensor<float> hot(Shape{1, 4, 4}, 2.0f);
  CHECK_THROWS_AS(degrade(hot, DegradationSpec{}), ConfigError);
}
