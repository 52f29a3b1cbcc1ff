#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "xunit/autodiff.hpp"
#include "xunit/data.hpp"
#include "xunit/image.hpp"
#include "xunit/models.hpp"

namespace xunit {

template <typename T>
double mse_value(const Tensor4<T>& a, const Tensor4<T>& b) {
  require_same_shape(a, b, "mse");
  double acc = 0;  // 64-bit accumulation regardless of element type
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - b.data[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

template <typename T>
struct AdamState {
  std::vector<Tensor4<T>> m, v;  // indexed like the ParamStore
  long t = 0;
  T beta1 = T(0.9), beta2 = T(0.999), eps = T(1e-8);

  explicit AdamState(const ParamStore<T>& store) {
    m.reserve(store.size());
    v.reserve(store.size());
    for (const auto& e : store) {
      m.emplace_back(e.value.n, e.value.c, e.value.h, e.value.w);
      v.emplace_back(e.value.n, e.value.c, e.value.h, e.value.w);
    }
  }
};

// Bias-corrected update in deterministic parameter order; gradients are
// zeroed afterwards.
template <typename T>
void adam_step(ParamStore<T>& store, AdamState<T>& state, T lr) {
  ++state.t;
  const T bc1 = T(1) - std::pow(state.beta1, static_cast<T>(state.t));
  const T bc2 = T(1) - std::pow(state.beta2, static_cast<T>(state.t));
  for (int e = 0; e < store.size(); ++e) {
    if (!store[e].trainable) continue;
    auto& val = store[e].value.data;
    auto& grad = store[e].grad.data;
    auto& m = state.m[e].data;
    auto& v = state.v[e].data;
    const long sz = static_cast<long>(val.size());
#pragma omp parallel for simd schedule(static)
    for (long i = 0; i < sz; ++i) {
      const T g = grad[i];
      m[i] = state.beta1 * m[i] + (T(1) - state.beta1) * g;
      v[i] = state.beta2 * v[i] + (T(1) - state.beta2) * g * g;
      const T mhat = m[i] / bc1;
      const T vhat = v[i] / bc2;
      val[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
      grad[i] = T(0);
    }
  }
}

// ---------------------------------------------------------------------------
// Training configuration and loop
// ---------------------------------------------------------------------------

struct LogRow {
  long step = 0;
  double lr = 0, loss = 0;
  double psnr = std::numeric_limits<double>::quiet_NaN();  // NaN = not evaluated
};

struct TrainConfig {
  int batch = 64;
  double lr_start = 1e-3;
  double lr_end = 1e-4;
  enum class Schedule { Geometric, Step };
  Schedule schedule = Schedule::Geometric;
  long total_steps = 0;
  double sigma255 = 25.0;
  uint64_t seed = 1;
  int eval_interval = 500;
  std::function<void(const LogRow&)> on_row;  // streaming progress, optional

  void validate() const {
    if (batch < 1) throw SpecError("TrainConfig: batch must be >= 1");
    if (!(lr_start >= lr_end && lr_end > 0))
      throw SpecError("TrainConfig: need lr_start >= lr_end > 0");
    if (total_steps < 0) throw SpecError("TrainConfig: negative total_steps");
  }
};

inline double learning_rate(const TrainConfig& cfg, long step) {
  cfg.validate();
  if (cfg.total_steps <= 0) return cfg.lr_start;
  const double frac = static_cast<double>(step) / static_cast<double>(cfg.total_steps);
  const double ratio = cfg.lr_end / cfg.lr_start;
  if (cfg.schedule == TrainConfig::Schedule::Geometric)
    return cfg.lr_start * std::pow(ratio, std::clamp(frac, 0.0, 1.0));
  // Step: four piecewise-constant stages along the same geometric path.
  const double q = std::floor(std::clamp(frac, 0.0, 1.0) * 4.0) / 4.0;
  return cfg.lr_start * std::pow(ratio, std::min(q, 1.0));
}

inline std::string log_csv(const std::vector<LogRow>& rows) {
  std::string out = "step,lr,loss,psnr\n";
  char buf[160];
  for (const auto& r : rows) {
    if (std::isnan(r.psnr))
      std::snprintf(buf, sizeof(buf), "%ld,%.9g,%.9g,\n", r.step, r.lr, r.loss);
    else
      std::snprintf(buf, sizeof(buf), "%ld,%.9g,%.9g,%.9g\n", r.step, r.lr, r.loss,
                    r.psnr);
    out += buf;
  }
  return out;
}

namespace detail {

inline uint64_t mix_seed(uint64_t a, uint64_t b) {
  uint64_t x = a ^ (b * 0x9e3779b97f4a7c15ULL + 0x2545f4914f6cdd1dULL);
  x ^= x >> 33;
  x *= 0xff51afd7ed558ccdULL;
  x ^= x >> 33;
  x *= 0xc4ceb9fe1a85ec53ULL;
  x ^= x >> 33;
  return x;
}

}  // namespace detail

template <typename T>
struct TrainResult {
  ParamStore<T> params;
  std::vector<LogRow> log;
};

template <typename T>
Image infer(const ModelSpec& spec, ParamStore<T>& params, const Image& degraded) {
  if (degraded.channels != spec.input_channels)
    throw DimensionError("infer: image has " + std::to_string(degraded.channels) +
                         " channels, model expects " +
                         std::to_string(spec.input_channels));
  Tensor4<T> x = image_to_tensor(degraded).template cast<T>();
  Tape<T> tape;
  auto xid = tape.leaf(x);
  auto pred = model_forward(tape, spec, params, xid, /*train=*/false);
  Tensor4<T> out = tape.value(pred);
  if (spec.residual) {
    // the network predicts the degradation; subtract it
    for (size_t i = 0; i < out.size(); ++i) out.data[i] = x.data[i] - out.data[i];
  }
  return tensor_to_image(out.template cast<float>(), /*clip=*/true);
}

template <typename T>
double eval_psnr(const ModelSpec& spec, ParamStore<T>& params,
                 const std::vector<Image>& heldout, double sigma255, uint64_t seed) {
  double acc = 0;
  for (size_t i = 0; i < heldout.size(); ++i) {
    const Image degraded =
        add_gaussian_noise(heldout[i], sigma255, detail::mix_seed(seed, 0xEFA1 + i));
    const Image restored = infer(spec, params, degraded);
    acc += psnr(restored, heldout[i]);
  }
  return heldout.empty() ? std::numeric_limits<double>::quiet_NaN()
                         : acc / static_cast<double>(heldout.size());
}

template <typename T>
TrainResult<T> train(const ModelSpec& spec, const PatchDataset& data,
                     const TrainConfig& cfg,
                     const std::vector<Image>* heldout = nullptr) {
  cfg.validate();
  validate_model(spec);
  if (cfg.total_steps > 0 && data.targets.empty())
    throw DataError("train: empty dataset");
  TrainResult<T> result{allocate_params<T>(spec, cfg.seed), {}};
  ParamStore<T>& params = result.params;
  AdamState<T> adam(params);
  if (cfg.total_steps == 0) return result;

  const int ps = data.patch;
  std::vector<size_t> order(data.targets.size());
  std::iota(order.begin(), order.end(), size_t(0));
  size_t pos = order.size();  // force an epoch at step 0
  long epoch = -1;
  Rng noise_rng(0);

  auto next_index = [&]() {
    if (pos >= order.size()) {
      ++epoch;
      Rng shuffle_rng(detail::mix_seed(cfg.seed, 0x50F1 + epoch));
      for (size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[shuffle_rng.next_below(i)]);
      // fresh noise realization each epoch
      noise_rng = Rng(detail::mix_seed(cfg.seed, 0xA01 + epoch));
      pos = 0;
    }
    return order[pos++];
  };

  for (long step = 0; step < cfg.total_steps; ++step) {
    Tensor4<T> clean(cfg.batch, data.channels, ps, ps);
    for (int b = 0; b < cfg.batch; ++b) {
      const Tensor4<float>& src = data.targets[next_index()];
      for (size_t i = 0; i < src.size(); ++i)
        clean.data[static_cast<size_t>(b) * src.size() + i] =
            static_cast<T>(src.data[i]);
    }
    Tensor4<T> noisy = clean;
    const double s = cfg.sigma255 / 255.0;
    for (auto& v : noisy.data) v += static_cast<T>(noise_rng.next_normal() * s);

    Tape<T> tape;
    auto x = tape.leaf(noisy);
    auto pred = model_forward(tape, spec, params, x, /*train=*/true);
    Tensor4<T> target_t =
        spec.residual ? elementwise(noisy, clean, EwOp::Sub) : clean;
    auto target = tape.leaf(std::move(target_t));
    auto loss = tape.mse(pred, target);
    const double loss_v = static_cast<double>(tape.scalar_value(loss));
    if (!std::isfinite(loss_v))
      throw std::runtime_error("training aborted: non-finite loss at step " +
                               std::to_string(step));
    tape.backward_scalar(loss, T(1));
    const double lr = learning_rate(cfg, step);
    adam_step(params, adam, static_cast<T>(lr));

    const bool last = (step + 1 == cfg.total_steps);
    if (step % cfg.eval_interval == 0 || last) {
      LogRow row{step, lr, loss_v, std::numeric_limits<double>::quiet_NaN()};
      if (heldout && !heldout->empty())
        row.psnr = eval_psnr(spec, params, *heldout, cfg.sigma255, cfg.seed);
      if (cfg.on_row) cfg.on_row(row);
      result.log.push_back(row);
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Parameter-budget sweep
// ---------------------------------------------------------------------------

struct SweepRow {
  std::string family;
  int depth = 0;
  int xkernel = 0;  // 0 for convnet rows
  long params = 0;
  double activation_fraction = 0;
  double psnr = std::numeric_limits<double>::quiet_NaN();
  std::string error;  // empty on success
};

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "family,depth,xkernel,params,activation_fraction,psnr\n";
  char buf[200];
  for (const auto& r : rows) {
    if (std::isnan(r.psnr))
      std::snprintf(buf, sizeof(buf), "%s,%d,%d,%ld,%.9g,\n", r.family.c_str(),
                    r.depth, r.xkernel, r.params, r.activation_fraction);
    else
      std::snprintf(buf, sizeof(buf), "%s,%d,%d,%ld,%.9g,%.9g\n", r.family.c_str(),
                    r.depth, r.xkernel, r.params, r.activation_fraction, r.psnr);
    out += buf;
  }
  return out;
}

// One training run per configuration; failures are recorded per row and
// the sweep continues.
inline std::vector<SweepRow> sweep(const std::string& family,
                                   const std::vector<int>& depths,
                                   const std::vector<int>& xkernels,
                                   const TrainConfig& base_cfg,
                                   const PatchDataset& data,
                                   const std::vector<Image>& heldout,
                                   int width = 64) {
  if (family != "convnet" && family != "xnet")
    throw SpecError("sweep: family must be 'convnet' or 'xnet'");
  std::vector<SweepRow> rows;
  const std::vector<int> xks =
      (family == "convnet") ? std::vector<int>{0} : xkernels;
  for (int depth : depths) {
    for (int xk : xks) {
      SweepRow row;
      row.family = family;
      row.depth = depth;
      row.xkernel = xk;
      try {
        const ModelSpec spec = (family == "convnet")
                                   ? build_convnet(depth, width, 3, data.channels)
                                   : build_xnet(depth, width, 3, xk, data.channels);
        row.params = count_params(spec);
        const long act = count_activation_params(spec);
        row.activation_fraction =
            row.params > 0 ? static_cast<double>(act) / row.params : 0.0;
        TrainConfig cfg = base_cfg;
        cfg.seed = detail::mix_seed(base_cfg.seed, 0x53EED + depth * 64 + xk);
        auto res = train<float>(spec, data, cfg, &heldout);
        row.psnr = eval_psnr(spec, res.params, heldout, cfg.sigma255, cfg.seed);
      } catch (const std::exception& e) {
        row.error = e.what();
      }
      rows.push_back(row);
    }
  }
  return rows;
}

}  // namespace xunit
