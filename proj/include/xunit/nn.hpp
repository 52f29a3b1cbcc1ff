#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "xunit/ops.hpp"
#include "xunit/tensor.hpp"

namespace xunit {

// ---------------------------------------------------------------------------
// ReLU and the Gaussian gate
// ---------------------------------------------------------------------------

template <typename T>
Tensor4<T> relu(const Tensor4<T>& z) {
  Tensor4<T> y(z.n, z.c, z.h, z.w);
  const long sz = static_cast<long>(z.size());
#pragma omp parallel for simd schedule(static)
  for (long i = 0; i < sz; ++i) y.data[i] = z.data[i] > T(0) ? z.data[i] : T(0);
  return y;
}

// The binary weight map equivalent to ReLU: 1 where z > 0, else 0.
template <typename T>
Tensor4<T> binary_gate(const Tensor4<T>& z) {
  Tensor4<T> g(z.n, z.c, z.h, z.w);
  for (size_t i = 0; i < z.size(); ++i) g.data[i] = z.data[i] > T(0) ? T(1) : T(0);
  return g;
}

// g = exp(-d^2), elementwise; range (0, 1].
template <typename T>
Tensor4<T> gaussian_gate(const Tensor4<T>& d) {
  Tensor4<T> g(d.n, d.c, d.h, d.w);
  const long sz = static_cast<long>(d.size());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < sz; ++i) g.data[i] = std::exp(-d.data[i] * d.data[i]);
  return g;
}

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

enum class BnMode { Train, Eval };

template <typename T>
struct BatchNormState {
  std::vector<T> gamma, beta, running_mean, running_var;
  T eps = T(1e-5);
  T momentum = T(0.1);  // running <- (1 - momentum) * running + momentum * batch
  BnMode mode = BnMode::Train;

  explicit BatchNormState(int channels)
      : gamma(channels, T(1)),
        beta(channels, T(0)),
        running_mean(channels, T(0)),
        running_var(channels, T(1)) {}

  int channels() const { return static_cast<int>(gamma.size()); }
};

namespace detail {

// Per-channel mean and population variance over (n, h, w).
template <typename T>
void bn_batch_stats(const Tensor4<T>& x, std::vector<T>& mean, std::vector<T>& var) {
  mean.assign(x.c, T(0));
  var.assign(x.c, T(0));
  const size_t plane = static_cast<size_t>(x.h) * x.w;
  const T inv_m = T(1) / (T(x.n) * plane);
#pragma omp parallel for schedule(static)
  for (int ic = 0; ic < x.c; ++ic) {
    T s = T(0);
    for (int in = 0; in < x.n; ++in) {
      const T* p = x.plane(in, ic);
      for (size_t i = 0; i < plane; ++i) s += p[i];
    }
    const T mu = s * inv_m;
    T v = T(0);
    for (int in = 0; in < x.n; ++in) {
      const T* p = x.plane(in, ic);
      for (size_t i = 0; i < plane; ++i) {
        const T d = p[i] - mu;
        v += d * d;
      }
    }
    mean[ic] = mu;
    var[ic] = v * inv_m;
  }
}

template <typename T>
Tensor4<T> bn_apply(const Tensor4<T>& x, const T* mean, const T* invstd,
                    const T* gamma, const T* beta) {
  Tensor4<T> y(x.n, x.c, x.h, x.w);
  const size_t plane = static_cast<size_t>(x.h) * x.w;
#pragma omp parallel for collapse(2) schedule(static)
  for (int in = 0; in < x.n; ++in)
    for (int ic = 0; ic < x.c; ++ic) {
      const T* src = x.plane(in, ic);
      T* dst = y.plane(in, ic);
      const T a = gamma[ic] * invstd[ic];
      const T b = beta[ic] - mean[ic] * a;
#pragma omp simd
      for (size_t i = 0; i < plane; ++i) dst[i] = a * src[i] + b;
    }
  return y;
}

template <typename T>
struct BnGrads {
  Tensor4<T> dx;
  std::vector<T> dgamma, dbeta;
};

// Train mode differentiates through the batch statistics (three-term
// gradient); eval mode treats the running statistics as constants.
template <typename T>
BnGrads<T> bn_backward(const Tensor4<T>& dy, const Tensor4<T>& x,
                       const std::vector<T>& mean, const std::vector<T>& invstd,
                       const T* gamma, bool train_mode) {
  BnGrads<T> g;
  g.dx = Tensor4<T>(x.n, x.c, x.h, x.w);
  g.dgamma.assign(x.c, T(0));
  g.dbeta.assign(x.c, T(0));
  const size_t plane = static_cast<size_t>(x.h) * x.w;
  const T m = T(x.n) * plane;
#pragma omp parallel for schedule(static)
  for (int ic = 0; ic < x.c; ++ic) {
    const T mu = mean[ic], is = invstd[ic];
    T sum_dy = T(0), sum_dy_xhat = T(0);
    for (int in = 0; in < x.n; ++in) {
      const T* dyp = dy.plane(in, ic);
      const T* xp = x.plane(in, ic);
      for (size_t i = 0; i < plane; ++i) {
        sum_dy += dyp[i];
        sum_dy_xhat += dyp[i] * (xp[i] - mu) * is;
      }
    }
    g.dgamma[ic] = sum_dy_xhat;
    g.dbeta[ic] = sum_dy;
    for (int in = 0; in < x.n; ++in) {
      const T* dyp = dy.plane(in, ic);
      const T* xp = x.plane(in, ic);
      T* dxp = g.dx.plane(in, ic);
      if (train_mode) {
        for (size_t i = 0; i < plane; ++i) {
          const T xhat = (xp[i] - mu) * is;
          dxp[i] = gamma[ic] * is / m * (m * dyp[i] - sum_dy - xhat * sum_dy_xhat);
        }
      } else {
        for (size_t i = 0; i < plane; ++i) dxp[i] = gamma[ic] * is * dyp[i];
      }
    }
  }
  return g;
}

}  // namespace detail

// Stateful convenience entry point matching the layer contract; the model
// graph uses the same kernels through the tape instead.
template <typename T>
Tensor4<T> batchnorm(const Tensor4<T>& x, BatchNormState<T>& state) {
  if (x.c != state.channels())
    throw DimensionError("batchnorm: input has " + std::to_string(x.c) +
                         " channels, state expects " +
                         std::to_string(state.channels()));
  if (state.mode == BnMode::Train) {
    if (static_cast<long>(x.n) * x.h * x.w < 2)
      throw DimensionError("batchnorm: train mode needs n*h*w >= 2");
    std::vector<T> mean, var;
    detail::bn_batch_stats(x, mean, var);
    std::vector<T> invstd(x.c);
    for (int ic = 0; ic < x.c; ++ic) {
      invstd[ic] = T(1) / std::sqrt(var[ic] + state.eps);
      state.running_mean[ic] =
          (T(1) - state.momentum) * state.running_mean[ic] + state.momentum * mean[ic];
      state.running_var[ic] =
          (T(1) - state.momentum) * state.running_var[ic] + state.momentum * var[ic];
    }
    return detail::bn_apply(x, mean.data(), invstd.data(), state.gamma.data(),
                            state.beta.data());
  }
  std::vector<T> invstd(x.c);
  for (int ic = 0; ic < x.c; ++ic)
    invstd[ic] = T(1) / std::sqrt(state.running_var[ic] + state.eps);
  return detail::bn_apply(x, state.running_mean.data(), invstd.data(),
                          state.gamma.data(), state.beta.data());
}

// ---------------------------------------------------------------------------
// xUnit stage pipeline
// ---------------------------------------------------------------------------

// BN = batch norm, RL = ReLU, CD = depthwise convolution, GS = Gaussian gate.
enum class Stage { BN, RL, CD, GS };

inline const std::vector<Stage>& default_stages() {
  static const std::vector<Stage> s{Stage::BN, Stage::RL, Stage::CD, Stage::BN,
                                    Stage::GS};
  return s;
}

inline std::string stage_name(Stage s) {
  switch (s) {
    case Stage::BN: return "BN";
    case Stage::RL: return "RL";
    case Stage::CD: return "CD";
    case Stage::GS: return "GS";
  }
  return "?";
}

inline std::string stages_to_string(const std::vector<Stage>& stages) {
  std::string out;
  for (size_t i = 0; i < stages.size(); ++i) {
    if (i) out += "+";
    out += stage_name(stages[i]);
  }
  return out;
}

// Accepts "BN+RL+CD+BN+GS" or comma-separated.
inline std::vector<Stage> parse_stages(const std::string& text) {
  std::vector<Stage> out;
  std::string tok;
  auto flush = [&] {
    if (tok.empty()) return;
    if (tok == "BN") out.push_back(Stage::BN);
    else if (tok == "RL") out.push_back(Stage::RL);
    else if (tok == "CD") out.push_back(Stage::CD);
    else if (tok == "GS") out.push_back(Stage::GS);
    else throw SpecError("unknown xUnit stage '" + tok + "'");
    tok.clear();
  };
  for (char ch : text) {
    if (ch == '+' || ch == ',' || ch == ' ') flush();
    else tok.push_back(ch);
  }
  flush();
  return out;
}

inline void validate_stages(const std::vector<Stage>& stages) {
  int cd = 0;
  for (Stage s : stages)
    if (s == Stage::CD) ++cd;
  if (cd != 1)
    throw SpecError("xUnit stage list must contain CD exactly once, got '" +
                    stages_to_string(stages) + "'");
}

struct XUnitSpec {
  int channels = 0;
  int kernel = 9;
  std::vector<Stage> stages = default_stages();
};

inline int bn_count(const std::vector<Stage>& stages) {
  int n = 0;
  for (Stage s : stages)
    if (s == Stage::BN) ++n;
  return n;
}

// Trainable parameter count of one xUnit: kernel^2 per channel for the
// depthwise filters plus (gamma, beta) per channel per BN stage. With the
// default pipeline this is (kernel^2 + 4) * channels.
inline long xunit_param_count(int channels, int kernel,
                              const std::vector<Stage>& stages = default_stages()) {
  validate_stages(stages);
  return static_cast<long>(channels) * (static_cast<long>(kernel) * kernel +
                                        2L * bn_count(stages));
}

// Direct (tape-free) forward pass of the gate pipeline; one BatchNormState
// per BN stage, consumed in pipeline order.
template <typename T>
Tensor4<T> xunit_forward(const Tensor4<T>& z, const XUnitSpec& spec,
                         const DepthwiseKernel<T>& dw,
                         std::vector<BatchNormState<T>*> bns) {
  validate_stages(spec.stages);
  if (z.c != spec.channels)
    throw DimensionError("xunit_forward: input has " + std::to_string(z.c) +
                         " channels, spec expects " + std::to_string(spec.channels));
  size_t bn_i = 0;
  Tensor4<T> d = z;
  for (Stage s : spec.stages) {
    switch (s) {
      case Stage::BN:
        if (bn_i >= bns.size()) throw SpecError("xunit_forward: missing BN state");
        d = batchnorm(d, *bns[bn_i++]);
        break;
      case Stage::RL: d = relu(d); break;
      case Stage::CD: d = depthwise_conv2d(d, dw, (spec.kernel - 1) / 2); break;
      case Stage::GS: d = gaussian_gate(d); break;
    }
  }
  return hadamard(z, d);
}

}  // namespace xunit
