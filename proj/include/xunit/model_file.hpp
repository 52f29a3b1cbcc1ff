#pragma once

// Model container: "XUMD" magic, u16 version, length-prefixed JSON
// manifest, raw little-endian f32 parameter blobs in manifest order, and
// a trailing CRC-32 over all preceding bytes.

#include <string>
#include <utility>

#include "xunit/autodiff.hpp"
#include "xunit/models.hpp"

namespace xunit {

struct LoadedModel {
  ModelSpec spec;
  ParamStore<float> params;
};

void save_model(const std::string& path, const ModelSpec& spec,
                const ParamStore<float>& params);

LoadedModel load_model(const std::string& path);

}  // namespace xunit
