#pragma once

#include <string>
#include <vector>

#include "xunit/autodiff.hpp"
#include "xunit/nn.hpp"

namespace xunit {

enum class LayerKind { Conv, BatchNorm, Relu, XUnit };

struct LayerSpec {
  LayerKind kind = LayerKind::Conv;
  // conv
  int in_channels = 0, out_channels = 0, kernel = 1;
  bool bias = false;
  // bn / xunit
  int channels = 0;
  int xkernel = 9;
  std::vector<Stage> stages;

  static LayerSpec conv(int in_ch, int out_ch, int kernel, bool bias);
  static LayerSpec bn(int channels);
  static LayerSpec relu();
  static LayerSpec xunit(int channels, int kernel,
                         std::vector<Stage> stages = default_stages());
};

struct ModelSpec {
  std::string name;
  int input_channels = 1;
  bool residual = true;
  std::vector<LayerSpec> layers;
};

// Throws SpecError unless consecutive layer channel counts chain and a
// residual model maps back to its input channel count.
void validate_model(const ModelSpec& spec);

long layer_param_count(const LayerSpec& layer);
long count_params(const ModelSpec& spec);
long count_activation_params(const ModelSpec& spec);  // xUnit share

// DnCNN-style plain net: Conv+ReLU, (Conv+BN+ReLU)*, Conv. depth >= 2.
ModelSpec build_convnet(int depth, int width = 64, int kernel = 3, int in_ch = 1);

// Conv+xUnit chain with a final plain conv; all convs biasless.
ModelSpec build_xnet(int depth, int width = 64, int kernel = 3, int xkernel = 9,
                     int in_ch = 1, std::vector<Stage> stages = default_stages());

// Same wiring as build_xnet with plain ReLUs in place of the xUnits; the
// baseline for the activation-overhead identity.
ModelSpec build_xnet_relu_twin(int depth, int width = 64, int kernel = 3,
                               int in_ch = 1);

ModelSpec build_dncnn(int in_ch = 1);   // depth 17, width 64
ModelSpec build_xdncnn(int in_ch = 1);  // depth 9, width 64, 9x9 xUnits

ModelSpec build_srcnn();
enum class XSrcnnVariant { F, C };  // F: smaller middle filters; C: 42 channels
ModelSpec build_xsrcnn(XSrcnnVariant variant);

// ---------------------------------------------------------------------------
// Parameter allocation and the tape forward pass
// ---------------------------------------------------------------------------

namespace detail {

inline std::string lname(int layer, const std::string& tail) {
  return "L" + std::to_string(layer) + "." + tail;
}

}  // namespace detail

template <typename T>
ParamStore<T> allocate_params(const ModelSpec& spec, uint64_t seed) {
  validate_model(spec);
  ParamStore<T> store;
  Rng rng(seed);
  auto add_bn = [&](const std::string& prefix, int ch) {
    store.add(prefix + ".gamma", Tensor4<T>(1, ch, 1, 1, T(1)));
    store.add(prefix + ".beta", Tensor4<T>(1, ch, 1, 1, T(0)));
    store.add(prefix + ".rmean", Tensor4<T>(1, ch, 1, 1, T(0)), /*trainable=*/false);
    store.add(prefix + ".rvar", Tensor4<T>(1, ch, 1, 1, T(1)), /*trainable=*/false);
  };
  for (size_t li = 0; li < spec.layers.size(); ++li) {
    const LayerSpec& L = spec.layers[li];
    const int i = static_cast<int>(li);
    switch (L.kind) {
      case LayerKind::Conv: {
        const double std = std::sqrt(2.0 / (static_cast<double>(L.kernel) * L.kernel *
                                            L.in_channels));
        Tensor4<T> w(L.out_channels, L.in_channels, L.kernel, L.kernel);
        for (auto& v : w.data) v = static_cast<T>(rng.next_normal() * std);
        store.add(detail::lname(i, "conv.w"), std::move(w));
        if (L.bias)
          store.add(detail::lname(i, "conv.b"), Tensor4<T>(1, L.out_channels, 1, 1));
        break;
      }
      case LayerKind::BatchNorm:
        add_bn(detail::lname(i, "bn"), L.channels);
        break;
      case LayerKind::Relu:
        break;
      case LayerKind::XUnit: {
        int bn_i = 0;
        for (Stage s : L.stages) {
          if (s == Stage::BN)
            add_bn(detail::lname(i, "xu.bn" + std::to_string(bn_i++)), L.channels);
          if (s == Stage::CD) {
            const double std =
                std::sqrt(2.0 / (static_cast<double>(L.xkernel) * L.xkernel));
            Tensor4<T> w(L.channels, 1, L.xkernel, L.xkernel);
            for (auto& v : w.data) v = static_cast<T>(rng.next_normal() * std);
            store.add(detail::lname(i, "xu.cd.w"), std::move(w));
          }
        }
        break;
      }
    }
  }
  return store;
}

template <typename T>
struct LayerTrace {
  int layer = -1;                              // index into spec.layers
  typename Tape<T>::Id z = -1, gate = -1, out = -1;  // gate = -1 for ReLU layers
};

template <typename T>
typename Tape<T>::Id model_forward(Tape<T>& tape, const ModelSpec& spec,
                                   ParamStore<T>& store, typename Tape<T>::Id x,
                                   bool train,
                                   std::vector<LayerTrace<T>>* traces = nullptr) {
  auto apply_bn = [&](typename Tape<T>::Id in, const std::string& prefix) {
    return tape.batchnorm(in, tape.param(store, prefix + ".gamma"),
                          tape.param(store, prefix + ".beta"),
                          store.require(prefix + ".rmean"),
                          store.require(prefix + ".rvar"), train);
  };
  typename Tape<T>::Id cur = x;
  for (size_t li = 0; li < spec.layers.size(); ++li) {
    const LayerSpec& L = spec.layers[li];
    const int i = static_cast<int>(li);
    switch (L.kind) {
      case LayerKind::Conv: {
        auto w = tape.param(store, detail::lname(i, "conv.w"));
        auto b = L.bias ? tape.param(store, detail::lname(i, "conv.b")) : -1;
        cur = tape.conv(cur, w, b, (L.kernel - 1) / 2);
        break;
      }
      case LayerKind::BatchNorm:
        cur = apply_bn(cur, detail::lname(i, "bn"));
        break;
      case LayerKind::Relu: {
        auto z = cur;
        cur = tape.relu(cur);
        if (traces) traces->push_back({i, z, -1, cur});
        break;
      }
      case LayerKind::XUnit: {
        validate_stages(L.stages);
        auto z = cur;
        auto d = z;
        int bn_i = 0;
        for (Stage s : L.stages) {
          switch (s) {
            case Stage::BN:
              d = apply_bn(d, detail::lname(i, "xu.bn" + std::to_string(bn_i++)));
              break;
            case Stage::RL:
              d = tape.relu(d);
              break;
            case Stage::CD:
              d = tape.depthwise(d, tape.param(store, detail::lname(i, "xu.cd.w")),
                                 (L.xkernel - 1) / 2);
              break;
            case Stage::GS:
              d = tape.gauss(d);
              break;
          }
        }
        cur = tape.hadamard(z, d);
        if (traces) traces->push_back({i, z, d, cur});
        break;
      }
    }
  }
  return cur;
}

}  // namespace xunit
