#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "xunit/nn.hpp"
#include "xunit/rng.hpp"

using namespace xunit;

TEST_CASE("relu equals z * binary_gate(z), zeros included") {
  Rng rng(1);
  Tensor4<double> z(1, 1, 100, 1000);
  for (auto& v : z.data) v = rng.next_normal();
  for (size_t i = 0; i < z.size(); i += 17) z.data[i] = 0.0;  // exercise ties
  auto lhs = relu(z);
  auto rhs = hadamard(z, binary_gate(z));
  CHECK(oracle::max_abs_diff(lhs, rhs) == 0);
  for (size_t i = 0; i < z.size(); ++i) {
    const double g = binary_gate(z).data[i];
    CHECK((g == 0.0 || g == 1.0));
  }
}

TEST_CASE("gaussian_gate: exp(-d^2), range (0,1], symmetric, peak at 0") {
  Tensor4<double> d(1, 1, 1, 5);
  d.data = {-2.0, -0.5, 0.0, 0.5, 2.0};
  auto g = gaussian_gate(d);
  CHECK(g.data[2] == 1.0);
  CHECK(g.data[0] == doctest::Approx(std::exp(-4.0)).epsilon(1e-14));
  CHECK(g.data[1] == g.data[3]);
  CHECK(g.data[0] == g.data[4]);
  Rng rng(2);
  Tensor4<double> r(1, 4, 16, 16);
  for (auto& v : r.data) v = rng.next_normal() * 3;
  auto gr = gaussian_gate(r);
  for (double v : gr.data) {
    CHECK(v > 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("batchnorm train: {1,3} per channel maps to {-1,+1} up to eps") {
  // one channel, two spatial samples: mean 2, population var 1
  Tensor4<double> x(1, 1, 1, 2);
  x.data = {1.0, 3.0};
  BatchNormState<double> bn(1);
  auto y = batchnorm(x, bn);
  const double expect = 1.0 / std::sqrt(1.0 + 1e-5);
  CHECK(y.data[0] == doctest::Approx(-expect).epsilon(1e-12));
  CHECK(y.data[1] == doctest::Approx(expect).epsilon(1e-12));
  // running stats moved 10% of the way from (0,1) to (2,1)
  CHECK(bn.running_mean[0] == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(bn.running_var[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("batchnorm train normalizes each channel to mean 0, var 1") {
  Rng rng(3);
  Tensor4<double> x(4, 3, 8, 8);
  for (auto& v : x.data) v = rng.next_normal() * 2.5 + 1.0;
  BatchNormState<double> bn(3);
  auto y = batchnorm(x, bn);
  const double m = 4.0 * 8 * 8;
  for (int c = 0; c < 3; ++c) {
    double s = 0, ss = 0;
    for (int in = 0; in < 4; ++in)
      for (int i = 0; i < 64; ++i) {
        const double v = y.plane(in, c)[i];
        s += v;
        ss += v * v;
      }
    CHECK(s / m == doctest::Approx(0.0).epsilon(1e-10));
    CHECK(ss / m - (s / m) * (s / m) == doctest::Approx(1.0).epsilon(1e-4));
  }
}

TEST_CASE("batchnorm eval uses running stats and gamma/beta affine") {
  BatchNormState<double> bn(1);
  bn.mode = BnMode::Eval;
  bn.running_mean[0] = 2.0;
  bn.running_var[0] = 4.0;
  bn.gamma[0] = 3.0;
  bn.beta[0] = -1.0;
  Tensor4<double> x(1, 1, 1, 1, 4.0);
  auto y = batchnorm(x, bn);
  // 3 * (4-2)/sqrt(4+eps) - 1
  CHECK(y.data[0] == doctest::Approx(3.0 * 2.0 / std::sqrt(4.0 + 1e-5) - 1.0)
                         .epsilon(1e-12));
}

TEST_CASE("batchnorm rejects degenerate shapes") {
  BatchNormState<double> bn(2);
  Tensor4<double> bad_ch(1, 3, 2, 2);
  CHECK_THROWS_AS(batchnorm(bad_ch, bn), DimensionError);
  Tensor4<double> single(1, 2, 1, 1);
  CHECK_THROWS_AS(batchnorm(single, bn), DimensionError);  // n*h*w < 2 in train
}

TEST_CASE("stage parsing and validation") {
  CHECK(stages_to_string(default_stages()) == "BN+RL+CD+BN+GS");
  CHECK(parse_stages("BN+RL+CD+BN+GS") == default_stages());
  CHECK(parse_stages("BN,RL,CD,BN,GS") == default_stages());
  CHECK_THROWS_AS(parse_stages("BN+XX"), SpecError);
  CHECK_THROWS_AS(validate_stages(parse_stages("BN+RL")), SpecError);      // no CD
  CHECK_THROWS_AS(validate_stages(parse_stages("CD+CD")), SpecError);      // two CDs
  CHECK_NOTHROW(validate_stages(parse_stages("RL+CD+GS")));
}

TEST_CASE("identity-configured xUnit matches z * exp(-relu(z)^2)") {
  // 1x1 depthwise delta kernel, BN bypassed via the stage list
  Rng rng(9);
  Tensor4<double> z(2, 3, 6, 6);
  for (auto& v : z.data) v = rng.next_normal();
  XUnitSpec spec;
  spec.channels = 3;
  spec.kernel = 1;
  spec.stages = parse_stages("RL+CD+GS");
  DepthwiseKernel<double> dw(3, 1, 1, 1.0);
  auto out = xunit_forward(z, spec, dw, {});
  double max_err = 0;
  for (size_t i = 0; i < z.size(); ++i) {
    const double r = z.data[i] > 0 ? z.data[i] : 0.0;
    const double expect = z.data[i] * std::exp(-r * r);
    max_err = std::max(max_err, std::abs(out.data[i] - expect));
  }
  CHECK(max_err < 1e-12);
}

TEST_CASE("xUnit gate with the default pipeline stays in (0,1]") {
  Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor4<double> z(2, 4, 8, 8);
    for (auto& v : z.data) v = rng.next_normal() * 2;
    XUnitSpec spec;
    spec.channels = 4;
    spec.kernel = 3;
    DepthwiseKernel<double> dw(4, 3, 3);
    for (auto& v : dw.data) v = rng.next_normal();
    BatchNormState<double> bn0(4), bn1(4);
    auto out = xunit_forward(z, spec, dw, {&bn0, &bn1});
    // recover the gate where z != 0: g = out / z, must be in (0, 1]
    for (size_t i = 0; i < z.size(); ++i) {
      if (std::abs(z.data[i]) < 1e-9) continue;
      const double g = out.data[i] / z.data[i];
      CHECK(g > 0.0);
      CHECK(g <= 1.0 + 1e-12);
    }
  }
}

TEST_CASE("BN+RL+CD variant (gate without GS) can go negative") {
  Rng rng(13);
  bool saw_negative = false;
  for (int trial = 0; trial < 20 && !saw_negative; ++trial) {
    Tensor4<double> z(2, 4, 8, 8);
    for (auto& v : z.data) v = rng.next_normal();
    XUnitSpec spec;
    spec.channels = 4;
    spec.kernel = 3;
    spec.stages = parse_stages("BN+RL+CD");
    DepthwiseKernel<double> dw(4, 3, 3);
    for (auto& v : dw.data) v = rng.next_normal();
    BatchNormState<double> bn0(4);
    auto out = xunit_forward(z, spec, dw, {&bn0});
    for (size_t i = 0; i < z.size(); ++i) {
      if (std::abs(z.data[i]) < 1e-9) continue;
      if (out.data[i] / z.data[i] < 0.0) saw_negative = true;
    }
  }
  CHECK(saw_negative);
}

TEST_CASE("xunit_forward validates its configuration") {
  Tensor4<double> z(1, 2, 4, 4, 1.0);
  XUnitSpec spec;
  spec.channels = 3;  // mismatch
  DepthwiseKernel<double> dw(3, 1, 1, 1.0);
  CHECK_THROWS_AS(xunit_forward(z, spec, dw, {}), DimensionError);

  spec.channels = 2;
  spec.stages = parse_stages("BN+CD+GS");
  DepthwiseKernel<double> dw2(2, 1, 1, 1.0);
  CHECK_THROWS_AS(xunit_forward(z, spec, dw2, {}), SpecError);  // missing BN state
}
