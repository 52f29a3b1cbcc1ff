#pragma once

// Brute-force reference implementations used as independent oracles.
// Deliberately written as plain nested loops with no shortcuts shared
// with the library code.

#include "xunit/tensor.hpp"

namespace oracle {

template <typename T>
xunit::Tensor4<T> conv2d(const xunit::Tensor4<T>& x, const xunit::ConvKernel<T>& k,
                         const std::vector<std::type_identity_t<T>>* bias, int pad) {
  const int oh = x.h + 2 * pad - k.kh + 1;
  const int ow = x.w + 2 * pad - k.kw + 1;
  xunit::Tensor4<T> y(x.n, k.oc, oh, ow);
  for (int in = 0; in < x.n; ++in)
    for (int o = 0; o < k.oc; ++o)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          T acc = bias ? (*bias)[o] : T(0);
          for (int ic = 0; ic < x.c; ++ic)
            for (int u = 0; u < k.kh; ++u)
              for (int v = 0; v < k.kw; ++v) {
                const int iy = oy + u - pad;
                const int ix = ox + v - pad;
                if (iy >= 0 && iy < x.h && ix >= 0 && ix < x.w)
                  acc += x.at(in, ic, iy, ix) * k.at(o, ic, u, v);
              }
          y.at(in, o, oy, ox) = acc;
        }
  return y;
}

template <typename T>
xunit::Tensor4<T> depthwise_conv2d(const xunit::Tensor4<T>& x,
                                   const xunit::DepthwiseKernel<T>& k, int pad) {
  const int oh = x.h + 2 * pad - k.kh + 1;
  const int ow = x.w + 2 * pad - k.kw + 1;
  xunit::Tensor4<T> y(x.n, x.c, oh, ow);
  for (int in = 0; in < x.n; ++in)
    for (int c = 0; c < x.c; ++c)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          T acc = T(0);
          for (int u = 0; u < k.kh; ++u)
            for (int v = 0; v < k.kw; ++v) {
              const int iy = oy + u - pad;
              const int ix = ox + v - pad;
              if (iy >= 0 && iy < x.h && ix >= 0 && ix < x.w)
                acc += x.at(in, c, iy, ix) * k.at(c, u, v);
            }
          y.at(in, c, oy, ox) = acc;
        }
  return y;
}

template <typename T>
T max_abs_diff(const xunit::Tensor4<T>& a, const xunit::Tensor4<T>& b) {
  T m = T(0);
  for (size_t i = 0; i < a.size(); ++i) {
    T d = a.data[i] - b.data[i];
    if (d < 0) d = -d;
    if (d > m) m = d;
  }
  return m;
}

}  // namespace oracle
