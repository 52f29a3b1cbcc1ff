#include "xunit/models.hpp"

namespace xunit {

LayerSpec LayerSpec::conv(int in_ch, int out_ch, int kernel, bool bias) {
  LayerSpec l;
  l.kind = LayerKind::Conv;
  l.in_channels = in_ch;
  l.out_channels = out_ch;
  l.kernel = kernel;
  l.bias = bias;
  return l;
}

LayerSpec LayerSpec::bn(int channels) {
  LayerSpec l;
  l.kind = LayerKind::BatchNorm;
  l.channels = channels;
  return l;
}

LayerSpec LayerSpec::relu() {
  LayerSpec l;
  l.kind = LayerKind::Relu;
  return l;
}

LayerSpec LayerSpec::xunit(int channels, int kernel, std::vector<Stage> stages) {
  LayerSpec l;
  l.kind = LayerKind::XUnit;
  l.channels = channels;
  l.xkernel = kernel;
  l.stages = std::move(stages);
  return l;
}

void validate_model(const ModelSpec& spec) {
  if (spec.input_channels < 1) throw SpecError("model: input_channels must be >= 1");
  int ch = spec.input_channels;
  for (size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& L = spec.layers[i];
    const std::string where = "layer " + std::to_string(i);
    switch (L.kind) {
      case LayerKind::Conv:
        if (L.in_channels != ch)
          throw SpecError(where + ": conv expects " + std::to_string(L.in_channels) +
                          " input channels but the chain carries " +
                          std::to_string(ch));
        if (L.kernel % 2 == 0) throw SpecError(where + ": conv kernel must be odd");
        ch = L.out_channels;
        break;
      case LayerKind::BatchNorm:
        if (L.channels != ch)
          throw SpecError(where + ": bn channel mismatch (" +
                          std::to_string(L.channels) + " vs " + std::to_string(ch) +
                          ")");
        break;
      case LayerKind::Relu:
        break;
      case LayerKind::XUnit:
        if (L.channels != ch)
          throw SpecError(where + ": xUnit channel mismatch (" +
                          std::to_string(L.channels) + " vs " + std::to_string(ch) +
                          ")");
        if (L.xkernel % 2 == 0) throw SpecError(where + ": xUnit kernel must be odd");
        validate_stages(L.stages);
        break;
    }
  }
  if (spec.residual && ch != spec.input_channels)
    throw SpecError("residual model must map back to " +
                    std::to_string(spec.input_channels) + " channels, ends at " +
                    std::to_string(ch));
}

long layer_param_count(const LayerSpec& layer) {
  switch (layer.kind) {
    case LayerKind::Conv:
      return static_cast<long>(layer.out_channels) * layer.in_channels *
                 layer.kernel * layer.kernel +
             (layer.bias ? layer.out_channels : 0);
    case LayerKind::BatchNorm:
      return 2L * layer.channels;
    case LayerKind::Relu:
      return 0;
    case LayerKind::XUnit:
      return xunit_param_count(layer.channels, layer.xkernel, layer.stages);
  }
  return 0;
}

long count_params(const ModelSpec& spec) {
  long total = 0;
  for (const auto& l : spec.layers) total += layer_param_count(l);
  return total;
}

long count_activation_params(const ModelSpec& spec) {
  long total = 0;
  for (const auto& l : spec.layers)
    if (l.kind == LayerKind::XUnit) total += layer_param_count(l);
  return total;
}

ModelSpec build_convnet(int depth, int width, int kernel, int in_ch) {
  if (depth < 2) throw SpecError("build_convnet: depth must be >= 2");
  ModelSpec m;
  m.name = "convnet-d" + std::to_string(depth) + "-w" + std::to_string(width);
  m.input_channels = in_ch;
  m.residual = true;
  m.layers.push_back(LayerSpec::conv(in_ch, width, kernel, /*bias=*/true));
  m.layers.push_back(LayerSpec::relu());
  for (int i = 0; i < depth - 2; ++i) {
    // bias omitted: absorbed by the following BN's beta
    m.layers.push_back(LayerSpec::conv(width, width, kernel, /*bias=*/false));
    m.layers.push_back(LayerSpec::bn(width));
    m.layers.push_back(LayerSpec::relu());
  }
  m.layers.push_back(LayerSpec::conv(width, in_ch, kernel, /*bias=*/true));
  validate_model(m);
  return m;
}

namespace {

ModelSpec build_xnet_impl(int depth, int width, int kernel, int xkernel, int in_ch,
                          const std::vector<Stage>* stages) {
  if (depth < 2) throw SpecError("build_xnet: depth must be >= 2");
  ModelSpec m;
  m.name = (stages ? "xnet-d" : "xnet-relu-d") + std::to_string(depth) + "-w" +
           std::to_string(width);
  m.input_channels = in_ch;
  m.residual = true;
  int ch = in_ch;
  for (int i = 0; i < depth - 1; ++i) {
    m.layers.push_back(LayerSpec::conv(ch, width, kernel, /*bias=*/false));
    if (stages)
      m.layers.push_back(LayerSpec::xunit(width, xkernel, *stages));
    else
      m.layers.push_back(LayerSpec::relu());
    ch = width;
  }
  m.layers.push_back(LayerSpec::conv(width, in_ch, kernel, /*bias=*/false));
  validate_model(m);
  return m;
}

}  // namespace

ModelSpec build_xnet(int depth, int width, int kernel, int xkernel, int in_ch,
                     std::vector<Stage> stages) {
  return build_xnet_impl(depth, width, kernel, xkernel, in_ch, &stages);
}

ModelSpec build_xnet_relu_twin(int depth, int width, int kernel, int in_ch) {
  return build_xnet_impl(depth, width, kernel, 0, in_ch, nullptr);
}

ModelSpec build_dncnn(int in_ch) {
  ModelSpec m = build_convnet(17, 64, 3, in_ch);
  m.name = "dncnn";
  return m;
}

ModelSpec build_xdncnn(int in_ch) {
  ModelSpec m = build_xnet(9, 64, 3, 9, in_ch);
  m.name = "xdncnn";
  return m;
}

ModelSpec build_srcnn() {
  ModelSpec m;
  m.name = "srcnn";
  m.input_channels = 1;
  m.residual = false;
  m.layers.push_back(LayerSpec::conv(1, 64, 9, true));
  m.layers.push_back(LayerSpec::relu());
  m.layers.push_back(LayerSpec::conv(64, 32, 5, true));
  m.layers.push_back(LayerSpec::relu());
  m.layers.push_back(LayerSpec::conv(32, 1, 5, true));
  validate_model(m);
  return m;
}

ModelSpec build_xsrcnn(XSrcnnVariant variant) {
  ModelSpec m;
  m.input_channels = 1;
  m.residual = false;
  if (variant == XSrcnnVariant::F) {
    // shrink the middle filters (5x5 -> 3x3)
    m.name = "xsrcnn-f";
    m.layers.push_back(LayerSpec::conv(1, 64, 9, true));
    m.layers.push_back(LayerSpec::xunit(64, 9));
    m.layers.push_back(LayerSpec::conv(64, 32, 3, true));
    m.layers.push_back(LayerSpec::xunit(32, 9));
    m.layers.push_back(LayerSpec::conv(32, 1, 5, true));
  } else {
    // shrink the first layer (64 -> 42 channels)
    m.name = "xsrcnn-c";
    m.layers.push_back(LayerSpec::conv(1, 42, 9, true));
    m.layers.push_back(LayerSpec::xunit(42, 9));
    m.layers.push_back(LayerSpec::conv(42, 32, 5, true));
    m.layers.push_back(LayerSpec::xunit(32, 9));
    m.layers.push_back(LayerSpec::conv(32, 1, 5, true));
  }
  validate_model(m);
  return m;
}

}  // namespace xunit
