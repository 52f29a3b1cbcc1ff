#pragma once

// Finite-difference verification suite shared by the grad-check CLI
// subcommand and the release gate. Always runs in 64-bit.

#include <string>
#include <utility>
#include <vector>

#include "xunit/autodiff.hpp"
#include "xunit/models.hpp"

namespace xunit {

struct GradCheckRow {
  std::string name;
  double max_rel_err = 0;
};

// `fault` scales the ReLU backward pass; 1.0 means no fault. Anything else
// exists so callers can prove the checker notices a broken gradient.
inline std::vector<GradCheckRow> grad_check_suite(uint64_t seed,
                                                  double fault = 1.0) {
  auto randt = [&](int n, int c, int h, int w, uint64_t salt) {
    Rng rng(seed * 0x9e3779b97f4a7c15ULL + salt);
    Tensor4<double> t(n, c, h, w);
    for (auto& v : t.data) v = rng.next_normal();
    return t;
  };
  const double eps = 1e-4;
  std::vector<GradCheckRow> rows;
  auto run = [&](const std::string& name, auto&& f, const Tensor4<double>& pt) {
    rows.push_back({name, grad_check(f, pt, eps, 200, seed)});
  };

  auto away_from_kink = [](Tensor4<double> t) {
    for (auto& v : t.data)
      if (std::abs(v) < 1e-3) v += 0.01;
    return t;
  };

  const auto pt = randt(2, 3, 6, 6, 1);
  run("relu", [&](Tape<double>& t, int x) {
    t.inject_backward_fault(fault);
    return t.sum(t.relu(x));
  }, away_from_kink(pt));
  run("gauss", [](Tape<double>& t, int x) { return t.sum(t.gauss(x)); }, pt);
  run("hadamard", [](Tape<double>& t, int x) { return t.sum(t.hadamard(x, x)); },
      pt);
  run("mse", [&](Tape<double>& t, int x) {
    return t.mse(x, t.leaf(randt(2, 3, 6, 6, 2)));
  }, pt);
  run("conv.x", [&](Tape<double>& t, int x) {
    auto w = t.leaf(randt(4, 3, 3, 3, 3));
    auto b = t.leaf(randt(1, 4, 1, 1, 4));
    return t.sum(t.conv(x, w, b, 1));
  }, pt);
  run("conv.w", [&](Tape<double>& t, int w) {
    auto x = t.leaf(randt(2, 3, 6, 6, 5));
    return t.sum(t.conv(x, w, -1, 1));
  }, randt(4, 3, 3, 3, 6));
  run("conv.b", [&](Tape<double>& t, int b) {
    auto x = t.leaf(randt(2, 3, 6, 6, 7));
    auto w = t.leaf(randt(4, 3, 3, 3, 8));
    return t.sum(t.conv(x, w, b, 1));
  }, randt(1, 4, 1, 1, 9));
  run("depthwise.x", [&](Tape<double>& t, int x) {
    auto w = t.leaf(randt(3, 1, 3, 3, 10));
    return t.sum(t.depthwise(x, w, 1));
  }, pt);
  run("depthwise.w", [&](Tape<double>& t, int w) {
    auto x = t.leaf(randt(2, 3, 6, 6, 11));
    return t.sum(t.depthwise(x, w, 1));
  }, randt(3, 1, 3, 3, 12));

  {
    ParamStore<double> store;
    store.add("rmean", Tensor4<double>(1, 3, 1, 1), false);
    store.add("rvar", Tensor4<double>(1, 3, 1, 1, 1.0), false);
    store.add("gamma", randt(1, 3, 1, 1, 13));
    store.add("beta", randt(1, 3, 1, 1, 14));
    run("batchnorm.x", [&](Tape<double>& t, int x) {
      auto g = t.param(store, "gamma");
      auto b = t.param(store, "beta");
      auto y = t.batchnorm(x, g, b, store.require("rmean"), store.require("rvar"),
                           true);
      return t.sum(t.hadamard(y, x));
    }, pt);
    rows.push_back(
        {"batchnorm.params", grad_check_params([&](Tape<double>& t) {
           auto x = t.leaf(randt(2, 3, 6, 6, 15));
           auto g = t.param(store, "gamma");
           auto b = t.param(store, "beta");
           auto y = t.batchnorm(x, g, b, store.require("rmean"),
                                store.require("rvar"), true);
           return t.mse(y, t.leaf(randt(2, 3, 6, 6, 16)));
         }, store, eps, 40, seed)});
  }

  // end-to-end: 2-layer xDnCNN-style net, 4 channels, 8x8 input
  {
    auto spec = build_xnet(2, 4, 3, 3);
    auto store = allocate_params<double>(spec, seed ^ 0xABCDEF);
    const auto x = randt(2, 1, 8, 8, 17);
    const auto target = randt(2, 1, 8, 8, 18);
    rows.push_back(
        {"xnet2.params", grad_check_params([&](Tape<double>& t) {
           t.inject_backward_fault(fault);
           auto pred = model_forward(t, spec, store, t.leaf(x), true);
           return t.mse(pred, t.leaf(target));
         }, store, eps, 20, seed)});
  }
  return rows;
}

}  // namespace xunit
