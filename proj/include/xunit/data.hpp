#pragma once

#include <string>
#include <vector>

#include "xunit/image.hpp"
#include "xunit/rng.hpp"
#include "xunit/tensor.hpp"

namespace xunit {

// Aligned (target) clean patches of uniform size; degraded inputs are
// synthesized at batch-assembly time so the noise can be refreshed per
// epoch.
struct PatchDataset {
  int channels = 0;
  int patch = 0;
  uint64_t seed = 0;
  std::string source;
  std::vector<Tensor4<float>> targets;  // each (1, channels, patch, patch)

  size_t size() const { return targets.size(); }
};

// Uniform random crops with independent horizontal/vertical flips,
// deterministic in `seed`. `names` (optional) improves error messages.
PatchDataset sample_patches(const std::vector<Image>& images, int count,
                            int size, uint64_t seed,
                            const std::vector<std::string>* names = nullptr);

// Adds i.i.d. zero-mean Gaussian noise with std sigma255/255 (sigma on the
// conventional 0-255 scale). Output is NOT clipped.
template <typename T>
Tensor4<T> add_gaussian_noise(const Tensor4<T>& clean, double sigma255,
                              uint64_t seed) {
  if (sigma255 < 0) throw DataError("add_gaussian_noise: sigma must be >= 0");
  Tensor4<T> out = clean;
  if (sigma255 == 0) return out;
  Rng rng(seed);
  const double s = sigma255 / 255.0;
  for (auto& v : out.data) v += static_cast<T>(rng.next_normal() * s);
  return out;
}

Image add_gaussian_noise(const Image& clean, double sigma255, uint64_t seed);

// Newline-separated list of image paths; blank lines ignored.
std::vector<std::string> read_manifest(const std::string& path);
std::vector<Image> load_images(const std::vector<std::string>& paths);

}  // namespace xunit
