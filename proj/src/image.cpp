#include "xunit/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "xunit/errors.hpp"

namespace xunit {

Image::Image(int channels_, int h_, int w_, float fill)
    : channels(channels_), h(h_), w(w_) {
  if ((channels != 1 && channels != 3) || h < 1 || w < 1)
    throw DimensionError("Image: need 1 or 3 channels and positive dims");
  data.assign(static_cast<size_t>(channels) * h * w, fill);
}

namespace {

// Skips whitespace and '#' comment lines between header tokens.
int read_pnm_int(std::istream& in) {
  int ch = in.get();
  while (ch != EOF) {
    if (ch == '#') {
      while (ch != EOF && ch != '\n') ch = in.get();
    } else if (!std::isspace(ch)) {
      break;
    }
    ch = in.get();
  }
  if (ch == EOF || !std::isdigit(ch)) throw IoError("PNM: malformed header");
  int v = 0;
  while (ch != EOF && std::isdigit(ch)) {
    v = v * 10 + (ch - '0');
    ch = in.get();
  }
  return v;
}

}  // namespace

Image load_image(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open image '" + path + "'");
  char m0 = 0, m1 = 0;
  f.get(m0);
  f.get(m1);
  if (m0 != 'P' || (m1 != '5' && m1 != '6'))
    throw IoError("'" + path + "': unsupported format (need binary PGM/PPM)");
  const int channels = (m1 == '5') ? 1 : 3;
  const int w = read_pnm_int(f);
  const int h = read_pnm_int(f);
  const int maxval = read_pnm_int(f);
  if (maxval != 255)
    throw IoError("'" + path + "': only 8-bit images supported (maxval " +
                  std::to_string(maxval) + ")");
  std::vector<uint8_t> raw(static_cast<size_t>(w) * h * channels);
  f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<size_t>(f.gcount()) != raw.size())
    throw IoError("'" + path + "': truncated pixel data");
  Image img(channels, h, w);
  // PNM interleaves channels per pixel; we store channel-major.
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c) {
        float v = raw[(static_cast<size_t>(y) * w + x) * channels + c] / 255.0f;
        img.at(c, y, x) = std::clamp(v, 0.0f, 1.0f);
      }
  return img;
}

void save_image(const Image& img, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f << (img.channels == 1 ? "P5" : "P6") << "\n"
    << img.w << " " << img.h << "\n255\n";
  std::vector<uint8_t> raw(img.size());
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x)
      for (int c = 0; c < img.channels; ++c) {
        const float v = std::clamp(img.at(c, y, x), 0.0f, 1.0f);
        raw[(static_cast<size_t>(y) * img.w + x) * img.channels + c] =
            static_cast<uint8_t>(std::lround(v * 255.0f));
      }
  f.write(reinterpret_cast<const char*>(raw.data()),
          static_cast<std::streamsize>(raw.size()));
  if (!f) throw IoError("short write to '" + path + "'");
}

Image to_luminance(const Image& img) {
  if (img.channels == 1) return img;
  Image out(1, img.h, img.w);
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x)
      out.at(0, y, x) = 0.299f * img.at(0, y, x) + 0.587f * img.at(1, y, x) +
                        0.114f * img.at(2, y, x);
  return out;
}

namespace {

// Catmull-Rom weights, a = -0.5.
inline void cubic_weights(double t, double w[4]) {
  const double a = -0.5;
  const double t2 = t * t, t3 = t2 * t;
  w[0] = a * (t3 - 2 * t2 + t);
  w[1] = (a + 2) * t3 - (a + 3) * t2 + 1;
  w[2] = -(a + 2) * t3 + (2 * a + 3) * t2 - a * t;
  w[3] = a * (t2 - t3);
}

}  // namespace

Image bicubic_resize(const Image& img, double factor) {
  if (factor <= 0) throw DataError("bicubic_resize: factor must be positive");
  const int oh = static_cast<int>(std::lround(img.h * factor));
  const int ow = static_cast<int>(std::lround(img.w * factor));
  if (oh < 1 || ow < 1)
    throw DataError("bicubic_resize: degenerate output size " + std::to_string(oh) +
                    "x" + std::to_string(ow));
  // Horizontal pass then vertical pass (the kernel is separable).
  Image tmp(img.channels, img.h, ow);
  for (int c = 0; c < img.channels; ++c)
    for (int ox = 0; ox < ow; ++ox) {
      const double src = (ox + 0.5) / factor - 0.5;
      const int base = static_cast<int>(std::floor(src));
      double wts[4];
      cubic_weights(src - base, wts);
      int idx[4];
      for (int k = 0; k < 4; ++k)
        idx[k] = std::clamp(base - 1 + k, 0, img.w - 1);
      for (int y = 0; y < img.h; ++y) {
        double acc = 0;
        for (int k = 0; k < 4; ++k) acc += wts[k] * img.at(c, y, idx[k]);
        tmp.at(c, y, ox) = static_cast<float>(acc);
      }
    }
  Image out(img.channels, oh, ow);
  for (int c = 0; c < img.channels; ++c)
    for (int oy = 0; oy < oh; ++oy) {
      const double src = (oy + 0.5) / factor - 0.5;
      const int base = static_cast<int>(std::floor(src));
      double wts[4];
      cubic_weights(src - base, wts);
      int idx[4];
      for (int k = 0; k < 4; ++k)
        idx[k] = std::clamp(base - 1 + k, 0, img.h - 1);
      for (int ox = 0; ox < ow; ++ox) {
        double acc = 0;
        for (int k = 0; k < 4; ++k) acc += wts[k] * tmp.at(c, idx[k], ox);
        out.at(c, oy, ox) = static_cast<float>(acc);
      }
    }
  return out;
}

double psnr(const Image& a, const Image& b, double peak) {
  if (a.channels != b.channels || a.h != b.h || a.w != b.w)
    throw DimensionError("psnr: image shapes differ");
  double mse = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - b.data[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.size());
  if (mse == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

Tensor4<float> image_to_tensor(const Image& img) {
  Tensor4<float> t(1, img.channels, img.h, img.w);
  t.data = img.data;
  return t;
}

Image tensor_to_image(const Tensor4<float>& t, bool clip) {
  if (t.n != 1) throw DimensionError("tensor_to_image: batch must be 1");
  Image img(t.c, t.h, t.w);
  img.data = t.data;
  if (clip)
    for (auto& v : img.data) v = std::clamp(v, 0.0f, 1.0f);
  return img;
}

}  // namespace xunit
