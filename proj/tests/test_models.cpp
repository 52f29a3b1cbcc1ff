#include <doctest.h>

#include "xunit/models.hpp"

using namespace xunit;

TEST_CASE("pinned parameter counts for the named architectures") {
  CHECK(count_params(build_xdncnn()) == 302720);
  CHECK(count_params(build_srcnn()) == 57281);
  CHECK(count_params(build_xsrcnn(XSrcnnVariant::F)) == 32673);
  CHECK(count_params(build_xsrcnn(XSrcnnVariant::C)) == 44167);
  // depth-17 baseline lands within 1% of the conventional 555K figure
  const long dncnn = count_params(build_dncnn());
  CHECK(std::abs(dncnn - 555000L) <= 5550);
}

TEST_CASE("hand-counted small nets") {
  // depth-2 xnet, width 1, all kernels 1: conv 1->1 (1) + xunit (1*(1+4)=5)
  // + conv 1->1 (1) = 7
  auto tiny = build_xnet(2, 1, 1, 1);
  CHECK(count_params(tiny) == 7);
  CHECK(count_activation_params(tiny) == 5);

  // depth-3 convnet, width 1, kernel 1:
  // conv+bias (2) + [conv (1) + bn (2)] + conv+bias (2) = 7
  CHECK(count_params(build_convnet(3, 1, 1)) == 7);
}

TEST_CASE("xunit_param_count matches (r^2 + 4) * channels for the default pipeline") {
  for (int r : {1, 3, 5, 9})
    for (int c : {1, 8, 64})
      CHECK(xunit_param_count(c, r) == static_cast<long>(r * r + 4) * c);
  // one-BN variant drops two scalars per channel
  CHECK(xunit_param_count(8, 3, parse_stages("RL+CD+BN+GS")) == 8 * (9 + 2));
  CHECK(xunit_param_count(8, 3, parse_stages("RL+CD")) == 8 * 9);
}

TEST_CASE("activation overhead identity: xnet minus relu twin") {
  for (int d = 2; d <= 9; ++d)
    for (int w : {8, 64})
      for (int r : {1, 3, 5, 9}) {
        const long delta = count_params(build_xnet(d, w, 3, r)) -
                           count_params(build_xnet_relu_twin(d, w, 3));
        CHECK(delta == static_cast<long>(d - 1) * (r * r + 4) * w);
      }
}

TEST_CASE("count_activation_params isolates the xUnit share") {
  auto m = build_xdncnn();
  CHECK(count_activation_params(m) == 8L * 64 * (81 + 4));
  CHECK(count_activation_params(build_dncnn()) == 0);
  CHECK(count_activation_params(build_convnet(5, 64)) == 0);
}

TEST_CASE("validate_model rejects broken wiring") {
  ModelSpec m;
  m.input_channels = 1;
  m.residual = false;
  m.layers.push_back(LayerSpec::conv(2, 4, 3, true));  // expects 2, gets 1
  CHECK_THROWS_AS(validate_model(m), SpecError);

  ModelSpec r;
  r.input_channels = 1;
  r.residual = true;
  r.layers.push_back(LayerSpec::conv(1, 4, 3, true));  // residual must end at 1
  CHECK_THROWS_AS(validate_model(r), SpecError);

  ModelSpec e;
  e.input_channels = 1;
  e.residual = false;
  e.layers.push_back(LayerSpec::conv(1, 1, 4, true));  // even kernel
  CHECK_THROWS_AS(validate_model(e), SpecError);

  CHECK_THROWS_AS(build_convnet(1), SpecError);
  CHECK_THROWS_AS(build_xnet(1, 8, 3, 9), SpecError);
}

TEST_CASE("allocate_params: store matches count_params and init statistics") {
  auto spec = build_xnet(3, 16, 3, 5);
  auto store = allocate_params<double>(spec, 123);
  CHECK(store.trainable_scalars() == count_params(spec));

  // BN affine starts at identity, running stats at (0, 1)
  CHECK(store[store.require("L1.xu.bn0.gamma")].value.data[0] == 1.0);
  CHECK(store[store.require("L1.xu.bn0.beta")].value.data[0] == 0.0);
  CHECK(store[store.require("L1.xu.bn0.rmean")].value.data[0] == 0.0);
  CHECK(store[store.require("L1.xu.bn0.rvar")].value.data[0] == 1.0);
  CHECK_FALSE(store[store.require("L1.xu.bn0.rmean")].trainable);
  CHECK_FALSE(store[store.require("L1.xu.bn1.rvar")].trainable);

  // same seed reproduces the weights, different seed does not
  auto again = allocate_params<double>(spec, 123);
  auto other = allocate_params<double>(spec, 124);
  const int wi = store.require("L0.conv.w");
  CHECK(store[wi].value.data == again[wi].value.data);
  CHECK(store[wi].value.data != other[wi].value.data);
}

TEST_CASE("model_forward of a residual net predicts the degradation") {
  // all-zero weights -> prediction 0; infer() would return the input as-is
  auto spec = build_xnet(2, 4, 3, 3);
  ParamStore<double> store = allocate_params<double>(spec, 7);
  for (auto& e : store)
    if (e.name.find("conv.w") != std::string::npos)
      std::fill(e.value.data.begin(), e.value.data.end(), 0.0);
  Rng rng(5);
  auto x = random_tensor<double>(2, 1, 6, 6, rng);
  Tape<double> tape;
  auto out = tape.value(model_forward(tape, spec, store, tape.leaf(x), true));
  for (double v : out.data) CHECK(v == 0.0);
}
