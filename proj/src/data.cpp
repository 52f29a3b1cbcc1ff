#include "xunit/data.hpp"

#include <fstream>

#include "xunit/errors.hpp"

namespace xunit {

PatchDataset sample_patches(const std::vector<Image>& images, int count, int size,
                            uint64_t seed, const std::vector<std::string>* names) {
  if (count < 0) throw DataError("sample_patches: negative count");
  if (size < 1) throw DataError("sample_patches: patch size must be >= 1");
  PatchDataset ds;
  ds.patch = size;
  ds.seed = seed;
  if (count > 0 && images.empty()) throw DataError("sample_patches: no images");
  for (size_t i = 0; i < images.size(); ++i) {
    if (i == 0) ds.channels = images[i].channels;
    if (images[i].channels != ds.channels)
      throw DataError("sample_patches: mixed channel counts");
    if (images[i].h < size || images[i].w < size) {
      const std::string id = (names && i < names->size())
                                 ? (*names)[i]
                                 : ("image #" + std::to_string(i));
      throw DataError("sample_patches: " + id + " is " + std::to_string(images[i].w) +
                      "x" + std::to_string(images[i].h) +
                      ", smaller than the patch size " + std::to_string(size));
    }
  }
  Rng rng(seed);
  ds.targets.reserve(count);
  for (int p = 0; p < count; ++p) {
    const size_t ii = static_cast<size_t>(rng.next_below(images.size()));
    const Image& img = images[ii];
    const int y0 = static_cast<int>(rng.next_below(img.h - size + 1));
    const int x0 = static_cast<int>(rng.next_below(img.w - size + 1));
    const bool hflip = rng.next_bool();
    const bool vflip = rng.next_bool();
    Tensor4<float> t(1, img.channels, size, size);
    for (int c = 0; c < img.channels; ++c)
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
          const int sy = vflip ? y0 + size - 1 - y : y0 + y;
          const int sx = hflip ? x0 + size - 1 - x : x0 + x;
          t.at(0, c, y, x) = img.at(c, sy, sx);
        }
    ds.targets.push_back(std::move(t));
  }
  return ds;
}

Image add_gaussian_noise(const Image& clean, double sigma255, uint64_t seed) {
  if (sigma255 < 0) throw DataError("add_gaussian_noise: sigma must be >= 0");
  Image out = clean;
  if (sigma255 == 0) return out;
  Rng rng(seed);
  const double s = sigma255 / 255.0;
  for (auto& v : out.data) v += static_cast<float>(rng.next_normal() * s);
  return out;
}

std::vector<std::string> read_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open manifest '" + path + "'");
  std::vector<std::string> paths;
  std::string line;
  while (std::getline(f, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) paths.push_back(line);
  }
  return paths;
}

std::vector<Image> load_images(const std::vector<std::string>& paths) {
  std::vector<Image> images;
  images.reserve(paths.size());
  for (const auto& p : paths) images.push_back(load_image(p));
  return images;
}

}  // namespace xunit
