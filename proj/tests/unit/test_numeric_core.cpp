#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "fairhyp/errors.hpp"
#include "fairhyp/layers.hpp"
#include "fairhyp/ops.hpp"
#include "oracles.hpp"

using namespace fairhyp;

TEST_CASE("shape and layout contract") {
  const Shape s{2, 3, 4, 5};
  CHECK(s.numel() == 120);
  CHECK(s.to_string() == "2x3x4x5");
  CHECK_THROWS_AS(Shape({2, 0, 3}), ConfigError);
  CHECK_THROWS_AS(Shape({1, 1, 1, 1, 1}), ConfigError);

  Tensor<float> t(s);
  CHECK(t.size() == s.numel());
  t.at(1, 2, 3, 4) = 7.0f;
  CHECK(t[((1 * 3 + 2) * 4 + 3) * 5 + 4] == 7.0f);
  CHECK_THROWS_AS(Tensor<float>(Shape{2, 2}, std::vector<float>(3)), ConfigError);
  CHECK_THROWS_AS(t.reshaped(Shape{7}), ConfigError);
}

TEST_CASE("param store names are unique and ordered") {
  ParamStore<float> store(9);
  store.add("b.weight", Shape{2, 3}, Init::fan_in_uniform(3));
  store.add("a.bias", Shape{2}, Init::zeros());
  store.add("c", Shape{1}, Init::constant(2.5));
  CHECK_THROWS_AS(store.add("a.bias", Shape{2}, Init::zeros()), ConfigError);
  std::vector<std::string> names;
  for (const auto& [n, e] : store.entries()) {
    names.push_back(n);
    CHECK(e.value.shape() == e.grad.shape());
  }
  CHECK(std::is_sorted(names.begin(), names.end()));
  CHECK(store.census() == 9);
  CHECK(store.census("b.") == 6);
  CHECK(store.value("c")[0] == 2.5f);
  for (float v : store.value("b.weight").data()) CHECK(std::abs(v) <= 1.0f / std::sqrt(3.0f));
  CHECK_THROWS_AS(store.set("c", Tensor<float>(Shape{2})), ConfigError);

  // Values depend on (seed, name) only, not on registration order.
  ParamStore<float> other(9);
  other.add("c", Shape{1}, Init::constant(2.5));
  other.add("b.weight", Shape{2, 3}, Init::fan_in_uniform(3));
  CHECK(oracle::bit_equal(other.value("b.weight"), store.value("b.weight")));
}

TEST_CASE("identity kernel leaves the input unchanged") {
  const auto x = oracle::random_tensor(Shape{1, 3, 4, 5}, 1);
  const Tensor<double> w(Shape{1, 1}, 1.0);
  CHECK(oracle::bit_equal(conv3d(x, w, nn::pointwise()), x));
}

TEST_CASE("all-ones 1x3x3 kernel counts window overlap") {
  const Tensor<double> x(Shape{1, 1, 3, 3}, 1.0);
  const Tensor<double> w(Shape{1, 9}, 1.0);
  const auto y = conv3d(x, w, nn::spatial_kernel());
  CHECK(y.at(0, 0, 1, 1) == 9.0);
  CHECK(y.at(0, 0, 0, 0) == 4.0);
  CHECK(y.at(0, 0, 2, 2) == 4.0);
  CHECK(y.at(0, 0, 0, 1) == 6.0);
}

TEST_CASE("convolution matches the direct window sum") {
  struct Case {
    ConvSpec spec;
    std::size_t cin, cout;
  };
  ConvSpec strided = nn::spatial_kernel();
  strided.stride_h = strided.stride_w = 2;
  ConvSpec valid = nn::cube_kernel();
  valid.padding = Padding::kValid;
  const Case cases[] = {{nn::cube_kernel(), 3, 2},      {nn::spatial_kernel(3, 3, 4), 4, 4},
                        {nn::spectral_kernel(5), 2, 3}, {strided, 2, 2},
                        {valid, 2, 1},                  {nn::spatial_kernel(3, 3, 2), 4, 6}};
  std::uint64_t seed = 10;
  for (const auto& c : cases) {
    const auto x = oracle::random_tensor(Shape{c.cin, 5, 6, 7}, seed++);
    const auto w = oracle::random_tensor(
        Shape{c.cout, c.cin / c.spec.groups * c.spec.kernel_volume()}, seed++);
    const auto bias = oracle::random_tensor(Shape{c.cout}, seed++);
    const auto got = conv3d(x, w, c.spec, &bias);
    const auto want = oracle::conv3d(x, w, c.spec, &bias);
    REQUIRE(got.shape() == want.shape());
    CHECK(oracle::max_abs_diff(got, want) < 1e-12);
  }
}

TEST_CASE("same padding with stride 1 keeps every extent") {
  for (const auto& spec : {nn::cube_kernel(), nn::spatial_kernel(), nn::spectral_kernel(),
                           nn::cube_kernel(5), nn::pointwise()}) {
    const auto x = oracle::random_tensor(Shape{2, 3, 2, 4}, 3);
    const Tensor<double> w(Shape{2, 2 * spec.kernel_volume()}, 0.1);
    CHECK(conv3d(x, w, spec).shape() == x.shape());
  }
}

TEST_CASE("convolution is linear in input and weights") {
  const ConvSpec spec = nn::cube_kernel();
  const auto x1 = oracle::random_tensor(Shape{2, 4, 5, 5}, 21);
  const auto x2 = oracle::random_tensor(Shape{2, 4, 5, 5}, 22);
  const auto w1 = oracle::random_tensor(Shape{3, 54}, 23);
  const auto w2 = oracle::random_tensor(Shape{3, 54}, 24);
  Tensor<double> xs(x1.shape()), ws(w1.shape());
  for (std::size_t i = 0; i < xs.size(); ++i) xs[i] = 2.0 * x1[i] - 0.5 * x2[i];
  for (std::size_t i = 0; i < ws.size(); ++i) ws[i] = 3.0 * w1[i] + w2[i];
  const auto a = conv3d(x1, w1, spec), b = conv3d(x2, w1, spec), c = conv3d(xs, w1, spec);
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(c[i] == doctest::Approx(2 * a[i] - 0.5 * b[i]).epsilon(1e-10));
  const auto d = conv3d(x1, w2, spec), e = conv3d(x1, ws, spec);
  for (std::size_t i = 0; i < e.size(); ++i) CHECK(e[i] == doctest::Approx(3 * a[i] + d[i]).epsilon(1e-10));
}

TEST_CASE("adjoint identity of conv and pointwise projection") {
  ConvSpec strided = nn::cube_kernel();
  strided.stride_h = strided.stride_w = 2;
  std::uint64_t seed = 100;
  for (const auto& spec : {nn::cube_kernel(), nn::pointwise(), nn::spatial_kernel(3, 3, 2),
                           nn::spectral_kernel(), strided}) {
    for (int trial = 0; trial < 5; ++trial) {
      const Dims4 in{4, 5, 6, 7};
      const auto x = oracle::random_tensor(in.shape(), seed++);
      const auto w = oracle::random_tensor(Shape{6, 4 / spec.groups * spec.kernel_volume()}, seed++);
      const auto y = oracle::random_tensor(conv_output_dims(in, 6, spec).shape(), seed++);
      const double lhs = oracle::dot(conv3d(x, w, spec), y);
      const double rhs = oracle::dot(x, conv3d_transpose(y, w, spec, in));
      CHECK(std::abs(lhs - rhs) <= 1e-5 * std::max(1.0, std::abs(lhs)));
    }
  }
}

TEST_CASE("mismatched weights are a configuration error naming the layer") {
  ParamStore<double> store;
  nn::Conv conv("probe.mix", 3, 2, nn::cube_kernel());
  conv.init(store);
  store.entries()["probe.mix.weight"].value = Tensor<double>(Shape{2, 10});
  Tape<double> tape(&store);
  const Var x = tape.input(Tensor<double>(Shape{3, 2, 2, 2}));
  try {
    conv.forward(tape, x);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("probe.mix") != std::string::npos);
  }
  CHECK_THROWS_AS(nn::Conv("bad", 3, 2, nn::spatial_kernel(3, 3, 2)), ConfigError);
}

TEST_CASE("backprop of simple losses") {
  const auto x = oracle::random_tensor(Shape{2, 3, 4, 5}, 7);
  {
    Tape<double> tape;
    const Var v = tape.input(x, true);
    tape.backward(sum(tape, v));
    const Tensor<double> g = tape.grad(v);
    CHECK(std::all_of(g.data().begin(), g.data().end(), [](double e) { return e == 1.0; }));
  }
  {
    Tape<double> tape;
    const Var v = tape.input(x, true);
    tape.backward(scale(tape, sum(tape, mul(tape, v, v)), 0.5));
    CHECK(oracle::max_abs_diff(tape.grad(v), x) < 1e-15);
  }
  {
    Tape<double> tape;
    const Var v = tape.input(x, true);
    const Var bad = tape.record("opaque", tape.value(v), {v}, {});
    CHECK_THROWS_AS(tape.backward(sum(tape, bad)), InternalError);
  }
  {
    Tape<double> tape;
    const Var v = tape.input(x, true);
    CHECK_THROWS_AS(tape.backward(v), ConfigError);
  }
}

TEST_CASE("primitive ops pass finite-difference checks") {
  ParamStore<double> store;
  const Shape s{2, 3, 4, 5};
  auto check = [&](const char* what, std::vector<Tensor<double>> in, const oracle::Forward& f) {
    const auto rep = oracle::gradcheck(store, std::move(in), f, 5, 1e-4, 32);
    INFO(what << " worst " << rep.worst << " rel " << rep.max_rel);
    CHECK(rep.max_rel < 1e-4);
  };
  const auto a = oracle::random_tensor(s, 1), b = oracle::random_tensor(s, 2);
  check("mul", {a, b}, [](auto& t, auto& v) { return mul(t, v[0], v[1]); });
  check("sub", {a, b}, [](auto& t, auto& v) { return sub(t, v[0], v[1]); });
  check("scale_by", {a, oracle::random_tensor(Shape{1}, 4)},
        [](auto& t, auto& v) { return scale_by(t, v[0], v[1]); });
  check("sigmoid", {a}, [](auto& t, auto& v) { return sigmoid(t, v[0]); });
  check("softplus", {a}, [](auto& t, auto& v) { return softplus(t, v[0]); });
  check("exponential", {a}, [](auto& t, auto& v) { return exponential(t, v[0]); });
  check("leaky", {a}, [](auto& t, auto& v) { return leaky_relu(t, v[0], 0.01); });
  check("relu", {a}, [](auto& t, auto& v) { return relu(t, v[0]); });
  check("swap", {a}, [](auto& t, auto& v) { return swap_channel_band(t, v[0]); });
  check("flip", {a}, [](auto& t, auto& v) { return flip_bands(t, v[0]); });
  check("slice+concat", {a, b}, [](auto& t, auto& v) {
    const Var parts[] = {slice_channels(t, v[0], 1, 2), v[1]};
    return concat_channels<double>(t, parts);
  });
  check("upsample", {oracle::random_tensor(Shape{2, 3, 2, 3}, 9)},
        [](auto& t, auto& v) { return upsample_nearest(t, v[0], 4, 5); });
  check("broadcast", {oracle::random_tensor(Shape{2, 3, 1, 1}, 9)},
        [](auto& t, auto& v) { return broadcast_spatial(t, v[0], 4, 5); });
  check("mean", {a}, [](auto& t, auto& v) { return spatial_mean(t, v[0]); });
  check("stats", {a}, [](auto& t, auto& v) {
    const auto st = spatial_stats(t, v[0]);
    const Var parts[] = {st.mean, st.max, st.min, st.var};
    return concat_channels<double>(t, parts);
  });
  check("mse", {a}, [&](auto& t, auto& v) { return mse(t, v[0], b); });
  check("cross-entropy", {oracle::random_tensor(Shape{7}, 11)},
        [](auto& t, auto& v) { return softmax_cross_entropy(t, v[0], 3); });
  check("conv", {a, oracle::random_tensor(Shape{4, 2 * 27}, 12), oracle::random_tensor(Shape{4}, 13)},
        [](auto& t, auto& v) { return conv3d(t, v[0], v[1], v[2], nn::cube_kernel()); });
  ConvSpec strided = nn::spatial_kernel(3, 3, 2);
  strided.stride_h = strided.stride_w = 2;
  check("strided grouped conv", {a, oracle::random_tensor(Shape{2, 9}, 14)},
        [&](auto& t, auto& v) { return conv3d(t, v[0], v[1], std::nullopt, strided); });
}

TEST_CASE("reduce_stats") {
  SUBCASE("constant plane") {
    const Tensor<double> x(Shape{2, 3, 4, 4}, 1.75);
    const auto st = reduce_stats(x);
    CHECK(st.mean.shape() == Shape{2, 3});
    for (std::size_t i = 0; i < 6; ++i) {
      CHECK(st.mean[i] == 1.75);
      CHECK(st.max[i] == 1.75);
      CHECK(st.min[i] == 1.75);
      CHECK(st.var[i] == 0.0);
    }
  }
  SUBCASE("half zeros half ones") {
    Tensor<double> x(Shape{1, 1, 2, 4});
    for (std::size_t i = 0; i < 8; i += 2) x[i] = 1.0;
    const auto st = reduce_stats(x);
    CHECK(st.mean[0] == 0.5);
    CHECK(st.var[0] == 0.25);
    CHECK(st.max[0] == 1.0);
    CHECK(st.min[0] == 0.0);
  }
  SUBCASE("singleton spatial gives zero variance") {
    const auto x = oracle::random_tensor(Shape{3, 2, 1, 1}, 3);
    const auto st = reduce_stats(x);
    for (std::size_t i = 0; i < 6; ++i) {
      CHECK(st.var[i] == 0.0);
      CHECK(st.mean[i] == x[i]);
    }
  }
  SUBCASE("spatial permutation leaves the stats bit-identical") {
    const auto x = oracle::random_tensor_f(Shape{3, 4, 5, 6}, 4);
    std::vector<std::size_t> perm(30);
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(5);
    std::shuffle(perm.begin(), perm.end(), rng);
    Tensor<float> y(x.shape());
    for (std::size_t plane = 0; plane < 12; ++plane)
      for (std::size_t p = 0; p < 30; ++p) y[plane * 30 + p] = x[plane * 30 + perm[p]];
    const auto a = reduce_stats(x), b = reduce_stats(y);
    CHECK(oracle::bit_equal(a.mean, b.mean));
    CHECK(oracle::bit_equal(a.max, b.max));
    CHECK(oracle::bit_equal(a.min, b.min));
    CHECK(oracle::bit_equal(a.var, b.var));
  }
}

TEST_CASE("tape FLOPs follow the conv formula") {
  ParamStore<float> store;
  nn::Conv conv("c", 1, 1, nn::pointwise());
  conv.init(store);
  Tape<float> tape(&store);
  const Var x = tape.input(Tensor<float>(Shape{1, 1, 4, 4}));
  {
    TapeScope<float> scope(tape, "probe");
    conv.forward(tape, x);
  }
  CHECK(tape.flops() == 2 * 16 + 16);
  CHECK(tape.flops_by_scope().at("probe") == 48);
  CHECK(conv.param_count() == 2);
}
