#pragma once

// Rank-4 tensor kernels. Every operation comes in two flavors:
//   * a plain serial loop implementation (the reference, kept for tests
//     and the benchmark target), suffixed _serial;
//   * the production path, OpenMP-parallel over images/channels, with
//     the inner products of multi-channel convolution routed through
//     BLAS GEMM on an im2col patch matrix.
// Both flavors are pure functions of their inputs.

#include <algorithm>
#include <type_traits>
#include <cstring>
#include <vector>

#include <cblas.h>
#ifdef _OPENMP
#include <omp.h>
#endif

#include "xunit/tensor.hpp"

namespace xunit {

enum class EwOp { Add, Sub, Mul };

namespace detail {

inline void gemm(CBLAS_TRANSPOSE ta, CBLAS_TRANSPOSE tb, int m, int n, int k,
                 float alpha, const float* a, int lda, const float* b, int ldb,
                 float beta, float* c, int ldc) {
  cblas_sgemm(CblasRowMajor, ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

inline void gemm(CBLAS_TRANSPOSE ta, CBLAS_TRANSPOSE tb, int m, int n, int k,
                 double alpha, const double* a, int lda, const double* b, int ldb,
                 double beta, double* c, int ldc) {
  cblas_dgemm(CblasRowMajor, ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

// Expand the (c, h, w) planes of image `in` of tensor x into a
// (c*kh*kw) x (oh*ow) patch matrix, zero-filling outside the border.
template <typename T>
void im2col(const Tensor4<T>& x, int in, int kh, int kw, int pad, int oh, int ow,
            T* col) {
  const int h = x.h, w = x.w;
  for (int ic = 0; ic < x.c; ++ic) {
    const T* src = x.plane(in, ic);
    for (int u = 0; u < kh; ++u) {
      for (int v = 0; v < kw; ++v) {
        T* row = col + ((static_cast<size_t>(ic) * kh + u) * kw + v) *
                           (static_cast<size_t>(oh) * ow);
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy + u - pad;
          T* dst = row + static_cast<size_t>(oy) * ow;
          if (iy < 0 || iy >= h) {
            std::memset(dst, 0, sizeof(T) * ow);
            continue;
          }
          const int ox0 = std::max(0, pad - v);
          const int ox1 = std::min(ow, w + pad - v);
          if (ox1 <= ox0) {
            std::memset(dst, 0, sizeof(T) * ow);
            continue;
          }
          if (ox0 > 0) std::memset(dst, 0, sizeof(T) * ox0);
          std::memcpy(dst + ox0, src + static_cast<size_t>(iy) * w + ox0 + v - pad,
                      sizeof(T) * (ox1 - ox0));
          if (ox1 < ow) std::memset(dst + ox1, 0, sizeof(T) * (ow - ox1));
        }
      }
    }
  }
}

// Scatter-add the patch matrix back into image `in` of dx.
template <typename T>
void col2im(const T* col, int in, int kh, int kw, int pad, int oh, int ow,
            Tensor4<T>& dx) {
  const int h = dx.h, w = dx.w;
  for (int ic = 0; ic < dx.c; ++ic) {
    T* dst_plane = dx.plane(in, ic);
    for (int u = 0; u < kh; ++u) {
      for (int v = 0; v < kw; ++v) {
        const T* row = col + ((static_cast<size_t>(ic) * kh + u) * kw + v) *
                                 (static_cast<size_t>(oh) * ow);
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy + u - pad;
          if (iy < 0 || iy >= h) continue;
          const int ox0 = std::max(0, pad - v);
          const int ox1 = std::min(ow, w + pad - v);
          const T* src = row + static_cast<size_t>(oy) * ow;
          T* dst = dst_plane + static_cast<size_t>(iy) * w + v - pad;
          for (int ox = ox0; ox < ox1; ++ox) dst[ox] += src[ox];
        }
      }
    }
  }
}

inline void check_conv_shapes(int xc, int kic, int pad, int h, int w, int kh, int kw,
                              const char* op) {
  if (kic != xc)
    throw DimensionError(std::string(op) + ": kernel expects " + std::to_string(kic) +
                         " input channels, input has " + std::to_string(xc));
  if (pad < 0) throw DimensionError(std::string(op) + ": negative padding");
  if (h + 2 * pad - kh + 1 < 1 || w + 2 * pad - kw + 1 < 1)
    throw DimensionError(std::string(op) + ": kernel " + std::to_string(kh) + "x" +
                         std::to_string(kw) + " larger than padded input " +
                         std::to_string(h + 2 * pad) + "x" + std::to_string(w + 2 * pad));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Multi-channel convolution (cross-correlation convention, zero padding)
// ---------------------------------------------------------------------------

template <typename T>
Tensor4<T> conv2d_serial(const Tensor4<T>& x, const ConvKernel<T>& k,
                         const std::vector<std::type_identity_t<T>>* bias, int pad) {
  detail::check_conv_shapes(x.c, k.ic, pad, x.h, x.w, k.kh, k.kw, "conv2d");
  if (bias && static_cast<int>(bias->size()) != k.oc)
    throw DimensionError("conv2d: bias length " + std::to_string(bias->size()) +
                         " != out_channels " + std::to_string(k.oc));
  const int oh = x.h + 2 * pad - k.kh + 1;
  const int ow = x.w + 2 * pad - k.kw + 1;
  Tensor4<T> y(x.n, k.oc, oh, ow);
  for (int in = 0; in < x.n; ++in)
    for (int o = 0; o < k.oc; ++o)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          T acc = bias ? (*bias)[o] : T(0);
          for (int ic = 0; ic < x.c; ++ic)
            for (int u = 0; u < k.kh; ++u)
              for (int v = 0; v < k.kw; ++v) {
                const int iy = oy + u - pad, ix = ox + v - pad;
                if (iy >= 0 && iy < x.h && ix >= 0 && ix < x.w)
                  acc += x.at(in, ic, iy, ix) * k.at(o, ic, u, v);
              }
          y.at(in, o, oy, ox) = acc;
        }
  return y;
}

template <typename T>
Tensor4<T> conv2d(const Tensor4<T>& x, const ConvKernel<T>& k,
                  const std::vector<std::type_identity_t<T>>* bias, int pad) {
  detail::check_conv_shapes(x.c, k.ic, pad, x.h, x.w, k.kh, k.kw, "conv2d");
  if (bias && static_cast<int>(bias->size()) != k.oc)
    throw DimensionError("conv2d: bias length " + std::to_string(bias->size()) +
                         " != out_channels " + std::to_string(k.oc));
  const int oh = x.h + 2 * pad - k.kh + 1;
  const int ow = x.w + 2 * pad - k.kw + 1;
  const int K = x.c * k.kh * k.kw;
  const size_t N = static_cast<size_t>(oh) * ow;
  Tensor4<T> y(x.n, k.oc, oh, ow);
#pragma omp parallel
  {
    std::vector<T> col(static_cast<size_t>(K) * N);
#pragma omp for schedule(static)
    for (int in = 0; in < x.n; ++in) {
      detail::im2col(x, in, k.kh, k.kw, pad, oh, ow, col.data());
      detail::gemm(CblasNoTrans, CblasNoTrans, k.oc, static_cast<int>(N), K, T(1),
                   k.data.data(), K, col.data(), static_cast<int>(N), T(0),
                   y.plane(in, 0), static_cast<int>(N));
      if (bias) {
        for (int o = 0; o < k.oc; ++o) {
          T* p = y.plane(in, o);
          const T b = (*bias)[o];
          for (size_t i = 0; i < N; ++i) p[i] += b;
        }
      }
    }
  }
  return y;
}

template <typename T>
struct Conv2dGrads {
  Tensor4<T> dx;          // valid only if requested
  ConvKernel<T> dkernel;
  std::vector<T> dbias;   // empty if the forward pass had no bias
  bool has_dx = false;
};

template <typename T>
Conv2dGrads<T> conv2d_backward_serial(const Tensor4<T>& dy, const Tensor4<T>& x,
                                      const ConvKernel<T>& k, bool had_bias, int pad,
                                      bool need_dx) {
  Conv2dGrads<T> g;
  g.dkernel = ConvKernel<T>(k.oc, k.ic, k.kh, k.kw);
  if (had_bias) g.dbias.assign(k.oc, T(0));
  if (need_dx) {
    g.dx = Tensor4<T>(x.n, x.c, x.h, x.w);
    g.has_dx = true;
  }
  for (int in = 0; in < x.n; ++in)
    for (int o = 0; o < k.oc; ++o)
      for (int oy = 0; oy < dy.h; ++oy)
        for (int ox = 0; ox < dy.w; ++ox) {
          const T d = dy.at(in, o, oy, ox);
          if (had_bias) g.dbias[o] += d;
          for (int ic = 0; ic < x.c; ++ic)
            for (int u = 0; u < k.kh; ++u)
              for (int v = 0; v < k.kw; ++v) {
                const int iy = oy + u - pad, ix = ox + v - pad;
                if (iy < 0 || iy >= x.h || ix < 0 || ix >= x.w) continue;
                g.dkernel.at(o, ic, u, v) += d * x.at(in, ic, iy, ix);
                if (need_dx) g.dx.at(in, ic, iy, ix) += d * k.at(o, ic, u, v);
              }
        }
  return g;
}

template <typename T>
Conv2dGrads<T> conv2d_backward(const Tensor4<T>& dy, const Tensor4<T>& x,
                               const ConvKernel<T>& k, bool had_bias, int pad,
                               bool need_dx) {
  const int oh = dy.h, ow = dy.w;
  const int K = x.c * k.kh * k.kw;
  const size_t N = static_cast<size_t>(oh) * ow;
  Conv2dGrads<T> g;
  g.dkernel = ConvKernel<T>(k.oc, k.ic, k.kh, k.kw);
  if (had_bias) g.dbias.assign(k.oc, T(0));
  if (need_dx) {
    g.dx = Tensor4<T>(x.n, x.c, x.h, x.w);
    g.has_dx = true;
  }
  // Per-image weight-gradient slabs, reduced in image order afterwards so
  // the result does not depend on thread scheduling.
  std::vector<T> dw_per_image(static_cast<size_t>(x.n) * k.oc * K, T(0));
#pragma omp parallel
  {
    std::vector<T> col(static_cast<size_t>(K) * N);
    std::vector<T> colgrad(need_dx ? static_cast<size_t>(K) * N : 0);
#pragma omp for schedule(static)
    for (int in = 0; in < x.n; ++in) {
      detail::im2col(x, in, k.kh, k.kw, pad, oh, ow, col.data());
      // dW_n = dY_n (oc x N) * col^T (N x K)
      detail::gemm(CblasNoTrans, CblasTrans, k.oc, K, static_cast<int>(N), T(1),
                   dy.plane(in, 0), static_cast<int>(N), col.data(),
                   static_cast<int>(N), T(0),
                   dw_per_image.data() + static_cast<size_t>(in) * k.oc * K, K);
      if (need_dx) {
        // colgrad = W^T (K x oc) * dY_n (oc x N), then scatter-add.
        detail::gemm(CblasTrans, CblasNoTrans, K, static_cast<int>(N), k.oc, T(1),
                     k.data.data(), K, dy.plane(in, 0), static_cast<int>(N), T(0),
                     colgrad.data(), static_cast<int>(N));
        detail::col2im(colgrad.data(), in, k.kh, k.kw, pad, oh, ow, g.dx);
      }
    }
  }
  for (int in = 0; in < x.n; ++in) {
    const T* slab = dw_per_image.data() + static_cast<size_t>(in) * k.oc * K;
    for (size_t i = 0; i < g.dkernel.data.size(); ++i) g.dkernel.data[i] += slab[i];
  }
  if (had_bias) {
    for (int in = 0; in < dy.n; ++in)
      for (int o = 0; o < k.oc; ++o) {
        const T* p = dy.plane(in, o);
        T acc = T(0);
        for (size_t i = 0; i < N; ++i) acc += p[i];
        g.dbias[o] += acc;
      }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Depthwise convolution
// ---------------------------------------------------------------------------

template <typename T>
Tensor4<T> depthwise_conv2d_serial(const Tensor4<T>& x, const DepthwiseKernel<T>& k,
                                   int pad) {
  detail::check_conv_shapes(x.c, k.c, pad, x.h, x.w, k.kh, k.kw, "depthwise_conv2d");
  const int oh = x.h + 2 * pad - k.kh + 1;
  const int ow = x.w + 2 * pad - k.kw + 1;
  Tensor4<T> y(x.n, x.c, oh, ow);
  for (int in = 0; in < x.n; ++in)
    for (int ic = 0; ic < x.c; ++ic)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          T acc = T(0);
          for (int u = 0; u < k.kh; ++u)
            for (int v = 0; v < k.kw; ++v) {
              const int iy = oy + u - pad, ix = ox + v - pad;
              if (iy >= 0 && iy < x.h && ix >= 0 && ix < x.w)
                acc += x.at(in, ic, iy, ix) * k.at(ic, u, v);
            }
          y.at(in, ic, oy, ox) = acc;
        }
  return y;
}

namespace detail {

// Copy one (h, w) plane into a zero-framed (h + 2*pad, w + 2*pad) buffer.
template <typename T>
void pad_plane(const T* src, int h, int w, int pad, T* dst) {
  const int pw = w + 2 * pad;
  std::memset(dst, 0, sizeof(T) * static_cast<size_t>(h + 2 * pad) * pw);
  for (int y = 0; y < h; ++y)
    std::memcpy(dst + static_cast<size_t>(y + pad) * pw + pad,
                src + static_cast<size_t>(y) * w, sizeof(T) * w);
}

}  // namespace detail

template <typename T>
Tensor4<T> depthwise_conv2d(const Tensor4<T>& x, const DepthwiseKernel<T>& k, int pad) {
  detail::check_conv_shapes(x.c, k.c, pad, x.h, x.w, k.kh, k.kw, "depthwise_conv2d");
  const int oh = x.h + 2 * pad - k.kh + 1;
  const int ow = x.w + 2 * pad - k.kw + 1;
  const int pw = x.w + 2 * pad;
  Tensor4<T> y(x.n, x.c, oh, ow);
  const long planes = static_cast<long>(x.n) * x.c;
#pragma omp parallel
  {
    std::vector<T> padded(static_cast<size_t>(x.h + 2 * pad) * pw);
#pragma omp for schedule(static)
    for (long p = 0; p < planes; ++p) {
      const int in = static_cast<int>(p / x.c);
      const int ic = static_cast<int>(p % x.c);
      detail::pad_plane(x.plane(in, ic), x.h, x.w, pad, padded.data());
      T* out = y.plane(in, ic);
      const T* kc = &k.at(ic, 0, 0);
      for (int oy = 0; oy < oh; ++oy) {
        T* orow = out + static_cast<size_t>(oy) * ow;
        std::memset(orow, 0, sizeof(T) * ow);
        for (int u = 0; u < k.kh; ++u) {
          const T* irow = padded.data() + static_cast<size_t>(oy + u) * pw;
          for (int v = 0; v < k.kw; ++v) {
            const T kv = kc[u * k.kw + v];
            const T* ip = irow + v;
#pragma omp simd
            for (int ox = 0; ox < ow; ++ox) orow[ox] += kv * ip[ox];
          }
        }
      }
    }
  }
  return y;
}

template <typename T>
struct DepthwiseGrads {
  Tensor4<T> dx;
  DepthwiseKernel<T> dkernel;
  bool has_dx = false;
};

template <typename T>
DepthwiseGrads<T> depthwise_backward_serial(const Tensor4<T>& dy, const Tensor4<T>& x,
                                            const DepthwiseKernel<T>& k, int pad,
                                            bool need_dx) {
  DepthwiseGrads<T> g;
  g.dkernel = DepthwiseKernel<T>(k.c, k.kh, k.kw);
  if (need_dx) {
    g.dx = Tensor4<T>(x.n, x.c, x.h, x.w);
    g.has_dx = true;
  }
  for (int in = 0; in < x.n; ++in)
    for (int ic = 0; ic < x.c; ++ic)
      for (int oy = 0; oy < dy.h; ++oy)
        for (int ox = 0; ox < dy.w; ++ox) {
          const T d = dy.at(in, ic, oy, ox);
          for (int u = 0; u < k.kh; ++u)
            for (int v = 0; v < k.kw; ++v) {
              const int iy = oy + u - pad, ix = ox + v - pad;
              if (iy < 0 || iy >= x.h || ix < 0 || ix >= x.w) continue;
              g.dkernel.at(ic, u, v) += d * x.at(in, ic, iy, ix);
              if (need_dx) g.dx.at(in, ic, iy, ix) += d * k.at(ic, u, v);
            }
        }
  return g;
}

template <typename T>
DepthwiseGrads<T> depthwise_backward(const Tensor4<T>& dy, const Tensor4<T>& x,
                                     const DepthwiseKernel<T>& k, int pad,
                                     bool need_dx) {
  const int oh = dy.h, ow = dy.w;
  const int pw = x.w + 2 * pad;
  const int ph = x.h + 2 * pad;
  DepthwiseGrads<T> g;
  g.dkernel = DepthwiseKernel<T>(k.c, k.kh, k.kw);
  if (need_dx) {
    g.dx = Tensor4<T>(x.n, x.c, x.h, x.w);
    g.has_dx = true;
  }
  // Parallel over channels; images within a channel stay in order so the
  // per-channel weight gradient accumulates deterministically.
#pragma omp parallel
  {
    std::vector<T> padded(static_cast<size_t>(ph) * pw);
    std::vector<T> dpad(need_dx ? static_cast<size_t>(ph) * pw : 0);
#pragma omp for schedule(static)
    for (int ic = 0; ic < x.c; ++ic) {
      T* dk = &g.dkernel.at(ic, 0, 0);
      for (int in = 0; in < x.n; ++in) {
        detail::pad_plane(x.plane(in, ic), x.h, x.w, pad, padded.data());
        const T* dyp = dy.plane(in, ic);
        if (need_dx)
          std::memset(dpad.data(), 0, sizeof(T) * dpad.size());
        for (int u = 0; u < k.kh; ++u)
          for (int v = 0; v < k.kw; ++v) {
            const T kv = k.at(ic, u, v);
            T acc = T(0);
            for (int oy = 0; oy < oh; ++oy) {
              const T* drow = dyp + static_cast<size_t>(oy) * ow;
              const T* irow = padded.data() + static_cast<size_t>(oy + u) * pw + v;
              T* dprow = need_dx ? dpad.data() + static_cast<size_t>(oy + u) * pw + v
                                 : nullptr;
              T rowacc = T(0);
#pragma omp simd reduction(+ : rowacc)
              for (int ox = 0; ox < ow; ++ox) rowacc += drow[ox] * irow[ox];
              acc += rowacc;
              if (need_dx) {
#pragma omp simd
                for (int ox = 0; ox < ow; ++ox) dprow[ox] += kv * drow[ox];
              }
            }
            dk[u * k.kw + v] += acc;
          }
        if (need_dx) {
          T* dst = g.dx.plane(in, ic);
          for (int y = 0; y < x.h; ++y)
            for (int xx = 0; xx < x.w; ++xx)
              dst[static_cast<size_t>(y) * x.w + xx] +=
                  dpad[static_cast<size_t>(y + pad) * pw + xx + pad];
        }
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Elementwise operations
// ---------------------------------------------------------------------------

template <typename T>
Tensor4<T> hadamard(const Tensor4<T>& a, const Tensor4<T>& b) {
  require_same_shape(a, b, "hadamard");
  Tensor4<T> y(a.n, a.c, a.h, a.w);
  const long sz = static_cast<long>(a.size());
#pragma omp parallel for simd schedule(static)
  for (long i = 0; i < sz; ++i) y.data[i] = a.data[i] * b.data[i];
  return y;
}

template <typename T>
Tensor4<T> elementwise(const Tensor4<T>& a, const Tensor4<T>& b, EwOp op) {
  require_same_shape(a, b, "elementwise");
  Tensor4<T> y(a.n, a.c, a.h, a.w);
  const long sz = static_cast<long>(a.size());
  switch (op) {
    case EwOp::Add:
#pragma omp parallel for simd schedule(static)
      for (long i = 0; i < sz; ++i) y.data[i] = a.data[i] + b.data[i];
      break;
    case EwOp::Sub:
#pragma omp parallel for simd schedule(static)
      for (long i = 0; i < sz; ++i) y.data[i] = a.data[i] - b.data[i];
      break;
    case EwOp::Mul:
#pragma omp parallel for simd schedule(static)
      for (long i = 0; i < sz; ++i) y.data[i] = a.data[i] * b.data[i];
      break;
  }
  return y;
}

template <typename T>
Tensor4<T> scale(const Tensor4<T>& a, T s) {
  Tensor4<T> y(a.n, a.c, a.h, a.w);
  const long sz = static_cast<long>(a.size());
#pragma omp parallel for simd schedule(static)
  for (long i = 0; i < sz; ++i) y.data[i] = a.data[i] * s;
  return y;
}

}  // namespace xunit
