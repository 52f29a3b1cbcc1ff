#include "xunit/model_file.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include <zlib.h>

#include <json.hpp>

namespace xunit {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'X', 'U', 'M', 'D'};
constexpr uint16_t kVersion = 1;

void put_u16(std::string& out, uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint16_t get_u16(const uint8_t* p) { return static_cast<uint16_t>(p[0] | (p[1] << 8)); }

uint32_t get_u32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

uint64_t get_u64(const uint8_t* p) {
  uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

json layer_to_json(const LayerSpec& l) {
  switch (l.kind) {
    case LayerKind::Conv:
      return json{{"kind", "conv"},
                  {"in", l.in_channels},
                  {"out", l.out_channels},
                  {"kernel", l.kernel},
                  {"bias", l.bias}};
    case LayerKind::BatchNorm:
      return json{{"kind", "bn"}, {"channels", l.channels}};
    case LayerKind::Relu:
      return json{{"kind", "relu"}};
    case LayerKind::XUnit: {
      json stages = json::array();
      for (Stage s : l.stages) stages.push_back(stage_name(s));
      return json{{"kind", "xunit"},
                  {"channels", l.channels},
                  {"kernel", l.xkernel},
                  {"stages", stages}};
    }
  }
  throw FormatError("unreachable layer kind");
}

LayerSpec layer_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "conv")
    return LayerSpec::conv(j.at("in").get<int>(), j.at("out").get<int>(),
                           j.at("kernel").get<int>(), j.at("bias").get<bool>());
  if (kind == "bn") return LayerSpec::bn(j.at("channels").get<int>());
  if (kind == "relu") return LayerSpec::relu();
  if (kind == "xunit") {
    std::vector<Stage> stages;
    for (const auto& s : j.at("stages")) {
      auto parsed = parse_stages(s.get<std::string>());
      stages.insert(stages.end(), parsed.begin(), parsed.end());
    }
    return LayerSpec::xunit(j.at("channels").get<int>(), j.at("kernel").get<int>(),
                            std::move(stages));
  }
  throw FormatError("model file: unknown layer kind '" + kind + "'");
}

}  // namespace

void save_model(const std::string& path, const ModelSpec& spec,
                const ParamStore<float>& params) {
  validate_model(spec);
  json manifest;
  manifest["name"] = spec.name;
  manifest["input_channels"] = spec.input_channels;
  manifest["residual"] = spec.residual;
  json layers = json::array();
  for (const auto& l : spec.layers) layers.push_back(layer_to_json(l));
  manifest["layers"] = layers;

  json records = json::array();
  uint64_t offset = 0;
  for (const auto& e : params) {
    records.push_back(json{{"name", e.name},
                           {"shape", {e.value.n, e.value.c, e.value.h, e.value.w}},
                           {"offset", offset},
                           {"trainable", e.trainable}});
    offset += e.value.size() * sizeof(float);
  }
  manifest["params"] = records;

  const std::string mjson = manifest.dump();
  std::string out;
  out.reserve(14 + mjson.size() + offset + 4);
  out.append(kMagic, 4);
  put_u16(out, kVersion);
  put_u64(out, mjson.size());
  out += mjson;
  for (const auto& e : params)
    out.append(reinterpret_cast<const char*>(e.value.data.data()),
               e.value.size() * sizeof(float));
  const uint32_t crc = static_cast<uint32_t>(
      crc32(0, reinterpret_cast<const Bytef*>(out.data()), out.size()));
  put_u32(out, crc);

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("short write to '" + path + "'");
}

LoadedModel load_model(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "'");
  std::vector<uint8_t> buf((std::istreambuf_iterator<char>(f)),
                           std::istreambuf_iterator<char>());
  if (buf.size() < 18) throw FormatError("model file: truncated (header)");
  if (std::memcmp(buf.data(), kMagic, 4) != 0)
    throw FormatError("model file: bad magic");
  const uint16_t version = get_u16(buf.data() + 4);
  if (version != kVersion)
    throw FormatError("model file: unsupported version " + std::to_string(version));
  const uint64_t json_len = get_u64(buf.data() + 6);
  if (14 + json_len + 4 > buf.size())
    throw FormatError("model file: truncated (manifest)");

  const uint32_t stored_crc = get_u32(buf.data() + buf.size() - 4);
  const uint32_t actual_crc = static_cast<uint32_t>(
      crc32(0, reinterpret_cast<const Bytef*>(buf.data()), buf.size() - 4));
  if (stored_crc != actual_crc) throw FormatError("model file: CRC mismatch");

  json manifest;
  try {
    manifest = json::parse(buf.begin() + 14, buf.begin() + 14 + json_len);
  } catch (const json::exception& e) {
    throw FormatError(std::string("model file: bad manifest JSON: ") + e.what());
  }

  LoadedModel m;
  try {
    m.spec.name = manifest.at("name").get<std::string>();
    m.spec.input_channels = manifest.at("input_channels").get<int>();
    m.spec.residual = manifest.at("residual").get<bool>();
    for (const auto& jl : manifest.at("layers"))
      m.spec.layers.push_back(layer_from_json(jl));

    const uint8_t* blob = buf.data() + 14 + json_len;
    const size_t blob_len = buf.size() - 4 - 14 - json_len;
    size_t expected_end = 0;
    for (const auto& jr : manifest.at("params")) {
      const auto shape = jr.at("shape").get<std::vector<int>>();
      if (shape.size() != 4) throw FormatError("model file: bad parameter shape");
      Tensor4<float> t(shape[0], shape[1], shape[2], shape[3]);
      const uint64_t off = jr.at("offset").get<uint64_t>();
      const size_t bytes = t.size() * sizeof(float);
      if (off + bytes > blob_len)
        throw FormatError("model file: parameter '" +
                          jr.at("name").get<std::string>() +
                          "' extends past the blob section");
      std::memcpy(t.data.data(), blob + off, bytes);
      m.params.add(jr.at("name").get<std::string>(), std::move(t),
                   jr.at("trainable").get<bool>());
      expected_end = std::max(expected_end, static_cast<size_t>(off) + bytes);
    }
    if (expected_end != blob_len)
      throw FormatError("model file: blob section length mismatch");
  } catch (const json::exception& e) {
    throw FormatError(std::string("model file: bad manifest: ") + e.what());
  }
  validate_model(m.spec);
  return m;
}

}  // namespace xunit
