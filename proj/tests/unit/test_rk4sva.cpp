#include <doctest.h>

#include <limits>

#include "fairhyp/ops.hpp"
#include "fairhyp/rk4sva.hpp"
#include "oracles.hpp"
#include "rk4_probe.hpp"

using namespace fairhyp;

TEST_CASE("reference step on closed-form problems") {
  auto zero = [](double, double) { return 0.0; };
  auto one = [](double, double) { return 1.0; };
  auto grow = [](double, double y) { return y; };
  CHECK(rk4_reference_step(zero, 0.0, 3.5, 0.1) == 3.5);
  CHECK(rk4_reference_step(one, 0.0, 2.0, 0.1) == doctest::Approx(2.1).epsilon(1e-15));
  const double y1 = rk4_reference_step(grow, 0.0, 1.0, 0.1);
  CHECK(std::abs(y1 - std::exp(0.1)) < 3e-7);
  CHECK(std::abs(y1 - 1.105170833333333) < 1e-14);
}

TEST_CASE("reference step names the failing stage") {
  auto blowup = [](double t, double) {
    return t > 0.0 ? std::numeric_limits<double>::infinity() : 1.0;
  };
  try {
    rk4_reference_step(blowup, 0.0, 1.0, 0.1);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("k2") != std::string::npos);
  }
}

TEST_CASE("reference step converges at fourth order") {
  const double slope = oracle::rk4_convergence_slope({0.1, 0.05, 0.025, 0.0125});
  CHECK(slope >= 3.8);
  CHECK(slope <= 4.2);
}

TEST_CASE("adapter reuses the (1,2,2,1)/6 combination") {
  const Rk4Sva m = oracle::linear_adapter();
  const auto isolated = oracle::extract_isolated_coefficients(m);
  const auto tied = oracle::extract_tied_coefficients(m);
  const double want[4] = {1.0 / 6, 2.0 / 6, 2.0 / 6, 1.0 / 6};
  for (int i = 0; i < 4; ++i) {
    CHECK(isolated[i] * 6.0 == doctest::Approx(want[i] * 6.0).epsilon(1e-15));
    CHECK(std::abs(tied[i] - want[i]) < 1e-12);
  }
  // With h = 1 the tied linear adapter is one reference step of y' = lambda y.
  for (double l : {0.5, -1.5, 0.125}) {
    const auto p = oracle::run_linear_adapter(m, {l, l, l, l}, 1.0);
    const double ref = rk4_reference_step([l](double, double y) { return l * y; }, 0.0, 1.0, 1.0);
    CHECK(p.y_hat == doctest::Approx(ref).epsilon(1e-14));
  }
}

TEST_CASE("zero network outputs 1.5 x") {
  Rk4SvaConfig cfg;
  cfg.bands = 5;
  cfg.ref_channels = 3;
  const Rk4Sva m("rk4sva", cfg);
  ParamStore<float> store;
  m.init(store);
  m.set_identity(store);
  const auto x = oracle::random_tensor_f(Shape{5, 6, 7}, 4);
  const auto y = m.apply(store, x);
  REQUIRE(y.shape() == x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == 1.5f * x[i]);
}

TEST_CASE("shape contract and small images") {
  Rk4SvaConfig cfg;
  cfg.bands = 31;
  const Rk4Sva m("rk4sva", cfg);
  ParamStore<float> store(3);
  m.init(store);
  CHECK(m.apply(store, oracle::random_tensor_f(Shape{31, 64, 64}, 1)).shape() == Shape{31, 64, 64});
  // Extents below the kernel still work (zero padding).
  CHECK(m.apply(store, oracle::random_tensor_f(Shape{31, 1, 2}, 1)).shape() == Shape{31, 1, 2});
  CHECK_THROWS_AS(m.apply(store, oracle::random_tensor_f(Shape{30, 4, 4}, 1)), ConfigError);
  cfg.kernel_h = 4;
  CHECK_THROWS_AS(Rk4Sva("bad", cfg), ConfigError);
  cfg.kernel_h = 3;
  cfg.ref_channels = 0;
  CHECK_THROWS_AS(Rk4Sva("bad", cfg), ConfigError);
}

TEST_CASE("gate stays inside (0,1) so the modulation ratio lies in (1,2)") {
  Rk4SvaConfig cfg;
  cfg.bands = 4;
  cfg.ref_channels = 2;
  const Rk4Sva m("rk4sva", cfg);
  ParamStore<double> store(8);
  m.init(store);
  oracle::randomize(store, 8, 0.8);
  Tape<double> tape(&store);
  const auto x = tape.input(oracle::random_tensor(Shape{4, 1, 6, 6}, 2, -3, 3));
  const auto tr = m.forward_trace(tape, x);
  const auto& a = tape.value(tr.alpha);
  const auto& yh = tape.value(tr.y_hat);
  const auto& yt = tape.value(tr.y_tilde);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i] > 0.0);
    CHECK(a[i] < 1.0);
    if (yh[i] != 0.0) {
      CHECK(yt[i] / yh[i] > 1.0);
      CHECK(yt[i] / yh[i] < 2.0);
    }
  }
}

TEST_CASE("finite-difference gradients of the adapter") {
  for (std::size_t gates : {1u, 2u}) {
    Rk4SvaConfig cfg;
    cfg.bands = 3;
    cfg.ref_channels = 2;
    cfg.gate_layers = gates;
    const Rk4Sva m("rk4sva", cfg);
    ParamStore<double> store(5);
    m.init(store);
    oracle::randomize(store, 50 + gates, 0.4);
    const auto rep = oracle::gradcheck(
        store, {oracle::random_tensor(Shape{3, 1, 5, 4}, 6)},
        [&](Tape<double>& t, std::vector<Var>& v) { return m.forward(t, v[0]); }, 7);
    INFO("worst " << rep.worst << " rel " << rep.max_rel);
    CHECK(rep.max_rel < 1e-4);
  }
}

TEST_CASE("step scalars receive finite-difference-exact gradients") {
  Rk4SvaConfig cfg;
  cfg.bands = 2;
  cfg.ref_channels = 2;
  const Rk4Sva m("rk4sva", cfg);
  ParamStore<double> store(1);
  m.init(store);
  const auto x = oracle::random_tensor(Shape{2, 1, 4, 4}, 3);
  auto loss = [&]() {
    Tape<double> tape(static_cast<const ParamStore<double>*>(&store));
    return tape.value(sum(tape, m.forward(tape, tape.input(x))))[0];
  };
  store.zero_grads();
  {
    Tape<double> tape(&store);
    tape.backward(sum(tape, m.forward(tape, tape.input(x))));
  }
  for (int s = 2; s <= 4; ++s) {
    double& h = store.value(m.step_name(s))[0];
    const double keep = h;
    h = keep + 1e-5;
    const double up = loss();
    h = keep - 1e-5;
    const double down = loss();
    h = keep;
    const double numeric = (up - down) / 2e-5;
    const double analytic = store.grad(m.step_name(s))[0];
    CHECK(std::abs(analytic - numeric) <= 1e-4 * std::max(std::abs(numeric), 1e-8));
  }
}

TEST_CASE("cost matches the parameter census and the executed tape") {
  Rk4SvaConfig cfg;
  cfg.bands = 6;
  cfg.ref_channels = 4;
  cfg.gate_layers = 2;
  const Rk4Sva m("rk4sva", cfg);
  ParamStore<float> store;
  m.init(store);
  CHECK(m.param_count() == store.census());
  Tape<float> tape(&store);
  m.forward(tape, tape.input(Tensor<float>(Shape{6, 1, 5, 7})));
  CHECK(m.cost(Dims4{6, 1, 5, 7}).flops == tape.flops());
}
