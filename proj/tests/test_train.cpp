#include <doctest.h>

#include <cmath>

#include "xunit/train.hpp"

using namespace xunit;

namespace {

PatchDataset tiny_dataset(int count, int patch, uint64_t seed) {
  PatchDataset ds;
  ds.channels = 1;
  ds.patch = patch;
  ds.seed = seed;
  Rng rng(seed);
  for (int i = 0; i < count; ++i) {
    Tensor4<float> t(1, 1, patch, patch);
    for (auto& v : t.data) v = static_cast<float>(rng.next_double());
    ds.targets.push_back(std::move(t));
  }
  return ds;
}

}  // namespace

TEST_CASE("adam_step follows the bias-corrected recurrence by hand") {
  // single scalar parameter, constant gradient 1; first two steps by hand:
  //   m1=0.1, v1=0.001, mhat=1, vhat=1  -> w -= lr * 1/(1+eps)
  ParamStore<double> store;
  store.add("w", Tensor4<double>(1, 1, 1, 1, 0.0));
  AdamState<double> adam(store);
  const double lr = 0.1, eps = 1e-8;

  store[0].grad.data[0] = 1.0;
  adam_step(store, adam, lr);
  const double w1 = -lr * 1.0 / (1.0 + eps);
  CHECK(store[0].value.data[0] == doctest::Approx(w1).epsilon(1e-12));
  CHECK(store[0].grad.data[0] == 0.0);  // grads cleared

  store[0].grad.data[0] = 1.0;
  adam_step(store, adam, lr);
  const double m2 = 0.9 * 0.1 + 0.1 * 1.0;             // 0.19
  const double v2 = 0.999 * 0.001 + 0.001 * 1.0;       // 0.001999
  const double mhat = m2 / (1 - std::pow(0.9, 2));     // / 0.19
  const double vhat = v2 / (1 - std::pow(0.999, 2));   // / 0.001999
  const double w2 = w1 - lr * mhat / (std::sqrt(vhat) + eps);
  CHECK(store[0].value.data[0] == doctest::Approx(w2).epsilon(1e-12));
}

TEST_CASE("adam skips non-trainable entries") {
  ParamStore<double> store;
  store.add("w", Tensor4<double>(1, 1, 1, 1, 1.0));
  store.add("buf", Tensor4<double>(1, 1, 1, 1, 1.0), /*trainable=*/false);
  AdamState<double> adam(store);
  store[0].grad.data[0] = 1.0;
  store[1].grad.data[0] = 1.0;
  adam_step(store, adam, 0.5);
  CHECK(store[0].value.data[0] < 1.0);
  CHECK(store[1].value.data[0] == 1.0);
}

TEST_CASE("learning_rate: geometric decay from 1e-3 to 1e-4") {
  TrainConfig cfg;
  cfg.total_steps = 1000;
  CHECK(learning_rate(cfg, 0) == doctest::Approx(1e-3).epsilon(1e-12));
  CHECK(learning_rate(cfg, 500) == doctest::Approx(std::sqrt(1e-3 * 1e-4)).epsilon(1e-9));
  CHECK(learning_rate(cfg, 1000) == doctest::Approx(1e-4).epsilon(1e-12));

  cfg.schedule = TrainConfig::Schedule::Step;
  CHECK(learning_rate(cfg, 0) == doctest::Approx(1e-3));
  CHECK(learning_rate(cfg, 100) == doctest::Approx(1e-3));     // first quarter
  CHECK(learning_rate(cfg, 250) == doctest::Approx(1e-3 * std::pow(0.1, 0.25)));
  CHECK(learning_rate(cfg, 999) == doctest::Approx(1e-3 * std::pow(0.1, 0.75)));

  TrainConfig bad;
  bad.lr_start = 1e-5;  // below lr_end
  bad.total_steps = 10;
  CHECK_THROWS_AS(learning_rate(bad, 0), SpecError);
}

TEST_CASE("log_csv header and row format") {
  std::vector<LogRow> rows{{0, 1e-3, 0.5, 28.1234},
                           {500, 5e-4, 0.25, std::nan("")}};
  const std::string csv = log_csv(rows);
  CHECK(csv.rfind("step,lr,loss,psnr\n", 0) == 0);
  CHECK(csv.find("0,0.001,0.5,28.1234\n") != std::string::npos);
  CHECK(csv.find("500,0.0005,0.25,\n") != std::string::npos);  // blank psnr cell
}

TEST_CASE("mse_value accumulates in 64-bit") {
  Tensor4<float> a(1, 1, 1, 4, 1.0f);
  Tensor4<float> b(1, 1, 1, 4, 0.0f);
  CHECK(mse_value(a, b) == doctest::Approx(1.0));
  Tensor4<float> c(1, 1, 1, 3);
  CHECK_THROWS_AS(mse_value(a, c), DimensionError);
}

TEST_CASE("train: zero steps returns the initialization, empty log") {
  auto spec = build_xnet(2, 4, 3, 3);
  PatchDataset ds = tiny_dataset(4, 8, 1);
  TrainConfig cfg;
  cfg.total_steps = 0;
  auto res = train<float>(spec, ds, cfg);
  CHECK(res.log.empty());
  auto fresh = allocate_params<float>(spec, cfg.seed);
  const int wi = fresh.require("L0.conv.w");
  CHECK(res.params[wi].value.data == fresh[wi].value.data);
}

TEST_CASE("train: loss decreases and reruns are bit-identical") {
  auto spec = build_xnet(2, 8, 3, 3);
  PatchDataset ds = tiny_dataset(8, 12, 2);
  TrainConfig cfg;
  cfg.batch = 4;
  cfg.total_steps = 30;
  cfg.eval_interval = 29;
  cfg.seed = 5;

  auto r1 = train<float>(spec, ds, cfg);
  auto r2 = train<float>(spec, ds, cfg);
  REQUIRE(!r1.log.empty());
  CHECK(r1.log.back().loss < r1.log.front().loss);
  CHECK(log_csv(r1.log) == log_csv(r2.log));
  for (int e = 0; e < r1.params.size(); ++e)
    CHECK(r1.params[e].value.data == r2.params[e].value.data);

  TrainConfig other = cfg;
  other.seed = 6;
  auto r3 = train<float>(spec, ds, other);
  CHECK(r3.params[0].value.data != r1.params[0].value.data);
}

TEST_CASE("train rejects an empty dataset") {
  auto spec = build_xnet(2, 4, 3, 3);
  PatchDataset empty;
  empty.channels = 1;
  empty.patch = 8;
  TrainConfig cfg;
  cfg.total_steps = 1;
  CHECK_THROWS_AS(train<float>(spec, empty, cfg), DataError);
}

TEST_CASE("infer: zero-weight residual model returns its (clipped) input") {
  auto spec = build_xnet(2, 4, 3, 3);
  auto params = allocate_params<float>(spec, 3);
  for (auto& e : params)
    if (e.name.find("conv.w") != std::string::npos)
      std::fill(e.value.data.begin(), e.value.data.end(), 0.0f);
  Image img(1, 10, 10);
  Rng rng(4);
  for (auto& v : img.data) v = static_cast<float>(rng.next_double());
  Image out = infer(spec, params, img);
  CHECK(out.data == img.data);

  Image rgb(3, 10, 10, 0.5f);
  CHECK_THROWS_AS(infer(spec, params, rgb), DimensionError);
}

TEST_CASE("eval_psnr: zero-weight model scores the noisy images themselves") {
  auto spec = build_xnet(2, 4, 3, 3);
  auto params = allocate_params<float>(spec, 3);
  for (auto& e : params)
    if (e.name.find("conv.w") != std::string::npos)
      std::fill(e.value.data.begin(), e.value.data.end(), 0.0f);
  std::vector<Image> heldout{Image(1, 16, 16, 0.5f)};
  const double p = eval_psnr(spec, params, heldout, 25.0, 9);
  // sigma 25/255 noise, clipped identity restoration: psnr near
  // 20*log10(255/25) ~ 20.2 dB, a bit higher because clipping helps
  CHECK(p > 19.0);
  CHECK(p < 23.0);
}

TEST_CASE("sweep produces one row per configuration and matching counts") {
  PatchDataset ds = tiny_dataset(4, 8, 7);
  std::vector<Image> heldout{Image(1, 8, 8, 0.5f)};
  TrainConfig cfg;
  cfg.batch = 2;
  cfg.total_steps = 2;
  cfg.eval_interval = 1;

  auto rows = sweep("xnet", {2, 3}, {3, 5}, cfg, ds, heldout, /*width=*/4);
  REQUIRE(rows.size() == 4);
  for (const auto& r : rows) {
    CHECK(r.error.empty());
    CHECK(r.family == "xnet");
    CHECK(r.params == count_params(build_xnet(r.depth, 4, 3, r.xkernel)));
    CHECK(r.activation_fraction > 0.0);
    CHECK(std::isfinite(r.psnr));
  }

  auto conv_rows = sweep("convnet", {2, 3}, {3, 5}, cfg, ds, heldout, 4);
  REQUIRE(conv_rows.size() == 2);  // xkernels ignored for convnet
  CHECK(conv_rows[0].xkernel == 0);
  CHECK(conv_rows[0].activation_fraction == 0.0);

  CHECK_THROWS_AS(sweep("resnet", {2}, {3}, cfg, ds, heldout), SpecError);

  const std::string csv = sweep_csv(rows);
  CHECK(csv.rfind("family,depth,xkernel,params,activation_fraction,psnr\n", 0) == 0);

  // identical call reproduces the CSV byte for byte
  auto rows2 = sweep("xnet", {2, 3}, {3, 5}, cfg, ds, heldout, 4);
  CHECK(sweep_csv(rows2) == csv);
}

TEST_CASE("sweep records per-row failures and keeps going") {
  PatchDataset ds = tiny_dataset(2, 4, 8);
  std::vector<Image> heldout{Image(1, 8, 8, 0.5f)};
  TrainConfig cfg;
  cfg.batch = 1;
  cfg.total_steps = 1;
  // depth 1 is invalid, depth 2 works
  auto rows = sweep("xnet", {1, 2}, {3}, cfg, ds, heldout, 4);
  REQUIRE(rows.size() == 2);
  CHECK(!rows[0].error.empty());
  CHECK(rows[1].error.empty());
}
