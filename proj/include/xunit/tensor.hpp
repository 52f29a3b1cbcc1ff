#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "xunit/errors.hpp"
#include "xunit/rng.hpp"

namespace xunit {

// Dense rank-4 array in (batch, channel, row, col) layout, row-major.
template <typename T>
struct Tensor4 {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<T> data;

  Tensor4() = default;

  Tensor4(int n_, int c_, int h_, int w_, T fill = T(0))
      : n(n_), c(c_), h(h_), w(w_) {
    if (n < 1 || c < 1 || h < 1 || w < 1) {
      throw DimensionError("Tensor4: all dimensions must be >= 1, got " +
                           shape_str_(n, c, h, w));
    }
    data.assign(static_cast<size_t>(n) * c * h * w, fill);
  }

  size_t size() const { return data.size(); }

  T& at(int in, int ic, int iy, int ix) {
    return data[((static_cast<size_t>(in) * c + ic) * h + iy) * w + ix];
  }
  const T& at(int in, int ic, int iy, int ix) const {
    return data[((static_cast<size_t>(in) * c + ic) * h + iy) * w + ix];
  }

  // Start of one (n, c) spatial plane.
  T* plane(int in, int ic) {
    return data.data() + (static_cast<size_t>(in) * c + ic) * h * w;
  }
  const T* plane(int in, int ic) const {
    return data.data() + (static_cast<size_t>(in) * c + ic) * h * w;
  }

  bool same_shape(const Tensor4& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }

  std::string shape_str() const { return shape_str_(n, c, h, w); }

  template <typename U>
  Tensor4<U> cast() const {
    Tensor4<U> out(n, c, h, w);
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }

 private:
  static std::string shape_str_(int n, int c, int h, int w) {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
           std::to_string(h) + "," + std::to_string(w) + ")";
  }
};

template <typename T>
void require_same_shape(const Tensor4<T>& a, const Tensor4<T>& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_str() +
                         " vs " + b.shape_str());
  }
}

// Multi-channel convolution weights, (out_channels, in_channels, kh, kw).
template <typename T>
struct ConvKernel {
  int oc = 0, ic = 0, kh = 0, kw = 0;
  std::vector<T> data;

  ConvKernel() = default;

  ConvKernel(int oc_, int ic_, int kh_, int kw_, T fill = T(0))
      : oc(oc_), ic(ic_), kh(kh_), kw(kw_) {
    if (oc < 1 || ic < 1 || kh < 1 || kw < 1)
      throw DimensionError("ConvKernel: all dimensions must be >= 1");
    if (kh % 2 == 0 || kw % 2 == 0)
      throw SpecError("ConvKernel: kernel size must be odd, got " +
                      std::to_string(kh) + "x" + std::to_string(kw));
    data.assign(static_cast<size_t>(oc) * ic * kh * kw, fill);
  }

  T& at(int o, int i, int u, int v) {
    return data[((static_cast<size_t>(o) * ic + i) * kh + u) * kw + v];
  }
  const T& at(int o, int i, int u, int v) const {
    return data[((static_cast<size_t>(o) * ic + i) * kh + u) * kw + v];
  }
};

// One spatial filter per channel, (channels, kh, kw).
template <typename T>
struct DepthwiseKernel {
  int c = 0, kh = 0, kw = 0;
  std::vector<T> data;

  DepthwiseKernel() = default;

  DepthwiseKernel(int c_, int kh_, int kw_, T fill = T(0)) : c(c_), kh(kh_), kw(kw_) {
    if (c < 1 || kh < 1 || kw < 1)
      throw DimensionError("DepthwiseKernel: all dimensions must be >= 1");
    if (kh % 2 == 0 || kw % 2 == 0)
      throw SpecError("DepthwiseKernel: kernel size must be odd, got " +
                      std::to_string(kh) + "x" + std::to_string(kw));
    data.assign(static_cast<size_t>(c) * kh * kw, fill);
  }

  T& at(int ch, int u, int v) {
    return data[(static_cast<size_t>(ch) * kh + u) * kw + v];
  }
  const T& at(int ch, int u, int v) const {
    return data[(static_cast<size_t>(ch) * kh + u) * kw + v];
  }
};

template <typename T>
Tensor4<T> random_tensor(int n, int c, int h, int w, Rng& rng, double scale = 1.0) {
  Tensor4<T> t(n, c, h, w);
  for (auto& v : t.data) v = static_cast<T>(rng.next_normal() * scale);
  return t;
}

}  // namespace xunit
