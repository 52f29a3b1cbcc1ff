// Timing comparison of the serial reference kernels against the parallel
// production kernels, forward and backward, plus a max-abs-diff sanity column.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "xunit/ops.hpp"
#include "xunit/rng.hpp"
#include "xunit/runtime.hpp"
#include "xunit/tensor.hpp"

using namespace xunit;
using Clock = std::chrono::steady_clock;

namespace {

double time_of(const std::function<void()>& fn, int reps) {
  fn();  // warm-up
  const auto t0 = Clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto t1 = Clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

double max_abs_diff(const std::vector<float>& a, const std::vector<float>& b) {
  double m = 0;
  for (size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
  return m;
}

void row(const std::string& what, double serial_ms, double parallel_ms,
         double diff) {
  std::printf("%-34s %10.2f %10.2f %8.2fx   %.2e\n", what.c_str(), serial_ms,
              parallel_ms, serial_ms / parallel_ms, diff);
}

struct ConvCase {
  int n, c, oc, hw, k;
};

void bench_conv(const ConvCase& cs, int reps) {
  Rng rng(42);
  auto x = random_tensor<float>(cs.n, cs.c, cs.hw, cs.hw, rng);
  ConvKernel<float> k(cs.oc, cs.c, cs.k, cs.k);
  for (auto& v : k.data) v = static_cast<float>(rng.next_normal() * 0.1);
  const int pad = (cs.k - 1) / 2;
  char label[96];
  std::snprintf(label, sizeof(label), "conv %dx%dx%dx%d k%d oc%d", cs.n, cs.c,
                cs.hw, cs.hw, cs.k, cs.oc);

  auto ys = conv2d_serial(x, k, nullptr, pad);
  auto yp = conv2d(x, k, nullptr, pad);
  row(std::string(label) + " fwd",
      time_of([&] { conv2d_serial(x, k, nullptr, pad); }, reps),
      time_of([&] { conv2d(x, k, nullptr, pad); }, reps),
      max_abs_diff(ys.data, yp.data));

  auto gs = conv2d_backward_serial(yp, x, k, false, pad, true);
  auto gp = conv2d_backward(yp, x, k, false, pad, true);
  row(std::string(label) + " bwd",
      time_of([&] { conv2d_backward_serial(yp, x, k, false, pad, true); }, reps),
      time_of([&] { conv2d_backward(yp, x, k, false, pad, true); }, reps),
      std::max(max_abs_diff(gs.dx.data, gp.dx.data),
               max_abs_diff(gs.dkernel.data, gp.dkernel.data)));
}

void bench_depthwise(int n, int c, int hw, int k, int reps) {
  Rng rng(7);
  auto x = random_tensor<float>(n, c, hw, hw, rng);
  DepthwiseKernel<float> dw(c, k, k);
  for (auto& v : dw.data) v = static_cast<float>(rng.next_normal() * 0.1);
  const int pad = (k - 1) / 2;
  char label[96];
  std::snprintf(label, sizeof(label), "depthwise %dx%dx%dx%d k%d", n, c, hw, hw, k);

  auto ys = depthwise_conv2d_serial(x, dw, pad);
  auto yp = depthwise_conv2d(x, dw, pad);
  row(std::string(label) + " fwd",
      time_of([&] { depthwise_conv2d_serial(x, dw, pad); }, reps),
      time_of([&] { depthwise_conv2d(x, dw, pad); }, reps),
      max_abs_diff(ys.data, yp.data));

  auto gs = depthwise_backward_serial(yp, x, dw, pad, true);
  auto gp = depthwise_backward(yp, x, dw, pad, true);
  row(std::string(label) + " bwd",
      time_of([&] { depthwise_backward_serial(yp, x, dw, pad, true); }, reps),
      time_of([&] { depthwise_backward(yp, x, dw, pad, true); }, reps),
      std::max(max_abs_diff(gs.dx.data, gp.dx.data),
               max_abs_diff(gs.dkernel.data, gp.dkernel.data)));
}

}  // namespace

int main(int, char** argv) {
  init_runtime(argv);
  std::printf("%-34s %10s %10s %9s   %s\n", "kernel", "serial ms", "parallel",
              "speedup", "max |diff|");
  bench_conv({4, 1, 64, 48, 3}, 3);
  bench_conv({4, 64, 64, 48, 3}, 3);
  bench_conv({1, 64, 64, 128, 3}, 3);
  bench_depthwise(4, 64, 48, 9, 3);
  bench_depthwise(1, 64, 128, 9, 3);
  return 0;
}
