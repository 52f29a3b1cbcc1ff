#pragma once

#include <string>
#include <vector>

#include "xunit/tensor.hpp"

namespace xunit {

// Gray (1 channel) or RGB (3 channel) image, values in [0, 1],
// channel-major (c, h, w) layout.
struct Image {
  int channels = 0, h = 0, w = 0;
  std::vector<float> data;

  Image() = default;
  Image(int channels_, int h_, int w_, float fill = 0.f);

  float& at(int c, int y, int x) {
    return data[(static_cast<size_t>(c) * h + y) * w + x];
  }
  float at(int c, int y, int x) const {
    return data[(static_cast<size_t>(c) * h + y) * w + x];
  }
  size_t size() const { return data.size(); }
};

// Binary PGM (P5) / PPM (P6), 8-bit. Values are scaled by 1/255 and
// clamped to [0, 1] on load.
Image load_image(const std::string& path);
void save_image(const Image& img, const std::string& path);

// ITU-R BT.601 luminance; identity for single-channel input.
Image to_luminance(const Image& img);

// Catmull-Rom bicubic (a = -0.5), edge-clamped. Output dims are
// round(dim * factor).
Image bicubic_resize(const Image& img, double factor);

// 10*log10(peak^2 / mse); +infinity when the images are identical.
double psnr(const Image& a, const Image& b, double peak = 1.0);

Tensor4<float> image_to_tensor(const Image& img);
Image tensor_to_image(const Tensor4<float>& t, bool clip = true);

}  // namespace xunit
