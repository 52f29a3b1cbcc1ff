// xunit — train, run and dissect the gated-activation denoising/SR nets.
//
// Exit codes: 0 success, 1 runtime/verification failure, 2 usage error.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "xunit/data.hpp"
#include "xunit/model_file.hpp"
#include "xunit/models.hpp"
#include "xunit/runtime.hpp"
#include "xunit/train.hpp"
#include "xunit/verify.hpp"

using namespace xunit;
namespace fs = std::filesystem;

namespace {

struct ArchFlags {
  std::string arch = "xdncnn";
  int depth = 0;    // 0 = family default
  int width = 64;
  int kernel = 3;
  int xkernel = 9;
  std::string stages = "BN+RL+CD+BN+GS";
  int channels = 1;
};

void add_arch_flags(CLI::App* cmd, ArchFlags& a) {
  cmd->add_option("--arch", a.arch, "architecture family")
      ->check(CLI::IsMember({"convnet", "xnet", "dncnn", "xdncnn", "srcnn",
                             "xsrcnnf", "xsrcnnc"}))
      ->capture_default_str();
  cmd->add_option("--depth", a.depth, "layer count (convnet/xnet only)");
  cmd->add_option("--width", a.width, "channels per hidden layer")->capture_default_str();
  cmd->add_option("--kernel", a.kernel, "conv kernel size")->capture_default_str();
  cmd->add_option("--xkernel", a.xkernel, "xUnit depthwise kernel size")
      ->capture_default_str();
  cmd->add_option("--stages", a.stages, "xUnit stage pipeline")->capture_default_str();
  cmd->add_option("--channels", a.channels, "input channels (1 or 3)")
      ->capture_default_str();
}

ModelSpec build_arch(const ArchFlags& a) {
  const auto stages = parse_stages(a.stages);
  if (a.arch == "convnet") return build_convnet(a.depth ? a.depth : 5, a.width, a.kernel, a.channels);
  if (a.arch == "xnet")
    return build_xnet(a.depth ? a.depth : 3, a.width, a.kernel, a.xkernel, a.channels, stages);
  if (a.arch == "dncnn") return build_dncnn(a.channels);
  if (a.arch == "xdncnn") return build_xdncnn(a.channels);
  if (a.arch == "srcnn") return build_srcnn();
  if (a.arch == "xsrcnnf") return build_xsrcnn(XSrcnnVariant::F);
  if (a.arch == "xsrcnnc") return build_xsrcnn(XSrcnnVariant::C);
  throw SpecError("unknown architecture '" + a.arch + "'");
}

std::vector<Image> load_for_model(const std::string& manifest, int want_channels) {
  auto images = load_images(read_manifest(manifest));
  if (images.empty()) throw DataError("manifest '" + manifest + "' lists no images");
  for (auto& img : images) {
    if (img.channels == 3 && want_channels == 1) img = to_luminance(img);
    if (img.channels != want_channels)
      throw DataError("image channel count " + std::to_string(img.channels) +
                      " does not match the model's " + std::to_string(want_channels));
  }
  return images;
}

const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::Conv: return "conv";
    case LayerKind::BatchNorm: return "bn";
    case LayerKind::Relu: return "relu";
    case LayerKind::XUnit: return "xunit";
  }
  return "?";
}

// Tile per-channel planes into one image, min-max normalized over the grid.
Image tile_grid(const Tensor4<float>& t) {
  const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(t.c))));
  const int rows = (t.c + cols - 1) / cols;
  float lo = t.data[0], hi = t.data[0];
  for (float v : t.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const float span = hi > lo ? hi - lo : 1.0f;
  Image grid(1, rows * t.h, cols * t.w);
  for (int c = 0; c < t.c; ++c) {
    const int gy = (c / cols) * t.h, gx = (c % cols) * t.w;
    for (int y = 0; y < t.h; ++y)
      for (int x = 0; x < t.w; ++x)
        grid.at(0, gy + y, gx + x) = (t.at(0, c, y, x) - lo) / span;
  }
  return grid;
}

void dump_raw(const Tensor4<float>& t, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  f.write(reinterpret_cast<const char*>(t.data.data()),
          static_cast<long>(t.data.size() * sizeof(float)));
  if (!f) throw IoError("short write to '" + path + "'");
}

int run(int argc, char** argv) {
  CLI::App app{"learnable spatial activations for denoising and super-resolution"};
  app.require_subcommand(1);

  // ---- train --------------------------------------------------------------
  auto* ct = app.add_subcommand("train", "train a model on an image manifest");
  ArchFlags ta;
  add_arch_flags(ct, ta);
  std::string t_data, t_out = "model.xumd", t_schedule = "geometric";
  TrainConfig tc;
  long t_patches = 512;
  int t_patch = 80;
  ct->add_option("--data", t_data, "newline-separated list of training images")
      ->required();
  ct->add_option("--out", t_out, "output model file")->capture_default_str();
  ct->add_option("--sigma", tc.sigma255, "noise std on the 0-255 scale")
      ->capture_default_str();
  ct->add_option("--steps", tc.total_steps, "training steps")->capture_default_str();
  ct->add_option("--batch", tc.batch, "batch size")->capture_default_str();
  ct->add_option("--seed", tc.seed, "rng seed")->capture_default_str();
  ct->add_option("--lr-start", tc.lr_start)->capture_default_str();
  ct->add_option("--lr-end", tc.lr_end)->capture_default_str();
  ct->add_option("--schedule", t_schedule, "geometric or step")
      ->check(CLI::IsMember({"geometric", "step"}))
      ->capture_default_str();
  ct->add_option("--eval-interval", tc.eval_interval)->capture_default_str();
  ct->add_option("--patch", t_patch, "training crop size")->capture_default_str();
  ct->add_option("--patches", t_patches, "number of crops sampled")
      ->capture_default_str();
  ct->callback([&] {
    auto spec = build_arch(ta);
    std::printf("config: arch=%s model=%s params=%ld sigma=%g steps=%ld batch=%d "
                "seed=%llu lr=%g..%g schedule=%s patch=%d patches=%ld data=%s out=%s\n",
                ta.arch.c_str(), spec.name.c_str(), count_params(spec), tc.sigma255,
                tc.total_steps, tc.batch, (unsigned long long)tc.seed, tc.lr_start,
                tc.lr_end, t_schedule.c_str(), t_patch, t_patches, t_data.c_str(),
                t_out.c_str());
    tc.schedule = t_schedule == "step" ? TrainConfig::Schedule::Step
                                       : TrainConfig::Schedule::Geometric;
    auto images = load_for_model(t_data, spec.input_channels);
    auto data = sample_patches(images, static_cast<int>(t_patches), t_patch, tc.seed);
    tc.on_row = [](const LogRow& r) {
      std::printf("step %ld lr=%.4g loss=%.6g\n", r.step, r.lr, r.loss);
      std::fflush(stdout);
    };
    auto res = train<float>(spec, data, tc);
    save_model(t_out, spec, res.params);
    const std::string csv_path = t_out + ".log.csv";
    std::ofstream csv(csv_path, std::ios::binary);
    csv << log_csv(res.log);
    if (!csv) throw IoError("cannot write '" + csv_path + "'");
    std::printf("wrote %s and %s\n", t_out.c_str(), csv_path.c_str());
  });

  // ---- denoise / sr ---------------------------------------------------------
  auto* cd = app.add_subcommand("denoise", "restore a degraded image with a model");
  std::string d_model, d_in, d_out;
  cd->add_option("--model", d_model)->required();
  cd->add_option("--in", d_in)->required();
  cd->add_option("--out", d_out)->required();
  cd->callback([&] {
    std::printf("config: model=%s in=%s out=%s\n", d_model.c_str(), d_in.c_str(),
                d_out.c_str());
    auto m = load_model(d_model);
    Image img = load_image(d_in);
    if (img.channels == 3 && m.spec.input_channels == 1) img = to_luminance(img);
    save_image(infer(m.spec, m.params, img), d_out);
    std::printf("wrote %s\n", d_out.c_str());
  });

  auto* cs = app.add_subcommand("sr", "bicubic pre-upscale then run the model");
  std::string s_model, s_in, s_out;
  int s_factor = 3;
  cs->add_option("--model", s_model)->required();
  cs->add_option("--factor", s_factor, "upscaling factor")
      ->check(CLI::IsMember({3, 4}))
      ->capture_default_str();
  cs->add_option("--in", s_in)->required();
  cs->add_option("--out", s_out)->required();
  cs->callback([&] {
    std::printf("config: model=%s factor=%d in=%s out=%s\n", s_model.c_str(), s_factor,
                s_in.c_str(), s_out.c_str());
    auto m = load_model(s_model);
    Image img = load_image(s_in);
    if (img.channels == 3 && m.spec.input_channels == 1) img = to_luminance(img);
    Image up = bicubic_resize(img, static_cast<double>(s_factor));
    save_image(infer(m.spec, m.params, up), s_out);
    std::printf("wrote %s\n", s_out.c_str());
  });

  // ---- psnr -----------------------------------------------------------------
  auto* cp = app.add_subcommand("psnr", "peak signal-to-noise ratio of two images");
  std::string p_a, p_b;
  double p_peak = 1.0;
  cp->add_option("a", p_a)->required();
  cp->add_option("b", p_b)->required();
  cp->add_option("--peak", p_peak)->capture_default_str();
  cp->callback([&] {
    const double v = psnr(load_image(p_a), load_image(p_b), p_peak);
    std::printf("%g\n", v);
  });

  // ---- count-params ----------------------------------------------------------
  auto* cc = app.add_subcommand("count-params", "trainable parameter counts");
  ArchFlags ca;
  add_arch_flags(cc, ca);
  bool c_json = false;
  cc->add_flag("--json", c_json, "machine-readable output");
  cc->callback([&] {
    auto spec = build_arch(ca);
    if (c_json) {
      nlohmann::json j;
      j["arch"] = ca.arch;
      j["model"] = spec.name;
      j["total"] = count_params(spec);
      j["activation"] = count_activation_params(spec);
      j["layers"] = nlohmann::json::array();
      for (const auto& l : spec.layers)
        j["layers"].push_back({{"kind", layer_kind_name(l.kind)},
                               {"params", layer_param_count(l)}});
      std::printf("%s\n", j.dump(2).c_str());
      return;
    }
    std::printf("config: arch=%s model=%s\n", ca.arch.c_str(), spec.name.c_str());
    for (size_t i = 0; i < spec.layers.size(); ++i)
      std::printf("  layer %2zu %-6s %ld\n", i, layer_kind_name(spec.layers[i].kind),
                  layer_param_count(spec.layers[i]));
    std::printf("  activation share %ld\n", count_activation_params(spec));
    std::printf("%ld\n", count_params(spec));
  });

  // ---- grad-check --------------------------------------------------------------
  auto* cg = app.add_subcommand("grad-check",
                                "finite-difference check of every backward pass");
  uint64_t g_seed = 1;
  double g_fault = 1.0;
  cg->add_option("--seed", g_seed)->capture_default_str();
  cg->add_option("--inject-fault", g_fault,
                 "scale the relu backward pass (negative control)")
      ->group("");  // hidden
  cg->callback([&] {
    std::printf("config: seed=%llu\n", (unsigned long long)g_seed);
    auto rows = grad_check_suite(g_seed, g_fault);
    bool ok = true;
    for (const auto& r : rows) {
      const bool finite = std::isfinite(r.max_rel_err);
      std::printf("%-17s %.3g%s\n", r.name.c_str(), r.max_rel_err,
                  !finite ? "  NON-FINITE" : (r.max_rel_err < 1e-4 ? "" : "  FAIL"));
      ok = ok && finite && r.max_rel_err < 1e-4;
    }
    if (!ok) throw std::runtime_error("gradient check failed (threshold 1e-4)");
  });

  // ---- sweep ---------------------------------------------------------------
  auto* cw = app.add_subcommand("sweep", "PSNR vs parameter budget across depths");
  std::string w_family = "xnet", w_data, w_out = "sweep.csv";
  std::vector<int> w_depths{3, 5, 7}, w_xkernels{9};
  int w_width = 64, w_patch = 80, w_heldout = 2;
  long w_patches = 512;
  TrainConfig wc;
  cw->add_option("--family", w_family)->check(CLI::IsMember({"convnet", "xnet"}))
      ->capture_default_str();
  cw->add_option("--depths", w_depths)->capture_default_str();
  cw->add_option("--xkernels", w_xkernels)->capture_default_str();
  cw->add_option("--width", w_width)->capture_default_str();
  cw->add_option("--data", w_data)->required();
  cw->add_option("--heldout", w_heldout, "images reserved for evaluation")
      ->capture_default_str();
  cw->add_option("--out", w_out)->capture_default_str();
  cw->add_option("--sigma", wc.sigma255)->capture_default_str();
  cw->add_option("--steps", wc.total_steps)->capture_default_str();
  cw->add_option("--batch", wc.batch)->capture_default_str();
  cw->add_option("--seed", wc.seed)->capture_default_str();
  cw->add_option("--patch", w_patch)->capture_default_str();
  cw->add_option("--patches", w_patches)->capture_default_str();
  cw->callback([&] {
    std::printf("config: family=%s width=%d sigma=%g steps=%ld batch=%d seed=%llu "
                "heldout=%d data=%s out=%s\n",
                w_family.c_str(), w_width, wc.sigma255, wc.total_steps, wc.batch,
                (unsigned long long)wc.seed, w_heldout, w_data.c_str(), w_out.c_str());
    auto images = load_for_model(w_data, 1);
    if (static_cast<int>(images.size()) <= w_heldout)
      throw DataError("need more images than the held-out count");
    std::vector<Image> heldout(images.end() - w_heldout, images.end());
    images.resize(images.size() - w_heldout);
    auto data = sample_patches(images, static_cast<int>(w_patches), w_patch, wc.seed);
    auto rows = sweep(w_family, w_depths, w_xkernels, wc, data, heldout, w_width);
    const std::string csv = sweep_csv(rows);
    std::ofstream f(w_out, std::ios::binary);
    f << csv;
    if (!f) throw IoError("cannot write '" + w_out + "'");
    std::fputs(csv.c_str(), stdout);
    int succeeded = 0;
    for (const auto& r : rows) {
      if (r.error.empty())
        ++succeeded;
      else
        std::printf("row %s/d%d/x%d failed: %s\n", r.family.c_str(), r.depth,
                    r.xkernel, r.error.c_str());
    }
    if (succeeded == 0) throw std::runtime_error("every sweep row failed");
  });

  // ---- inspect ---------------------------------------------------------------
  auto* ci = app.add_subcommand(
      "inspect", "dump feature, gate and product maps of an activation layer");
  std::string i_model, i_in, i_dir = ".";
  int i_layer = 0;
  bool i_raw = false;
  ci->add_option("--model", i_model)->required();
  ci->add_option("--in", i_in)->required();
  ci->add_option("--layer", i_layer, "activation layer index (0-based)")
      ->capture_default_str();
  ci->add_option("--out-dir", i_dir)->capture_default_str();
  ci->add_flag("--raw", i_raw, "also dump raw f32 blobs");
  ci->callback([&] {
    std::printf("config: model=%s in=%s layer=%d out-dir=%s raw=%d\n", i_model.c_str(),
                i_in.c_str(), i_layer, i_dir.c_str(), (int)i_raw);
    auto m = load_model(i_model);
    Image img = load_image(i_in);
    if (img.channels == 3 && m.spec.input_channels == 1) img = to_luminance(img);
    if (img.channels != m.spec.input_channels)
      throw DataError("image channels do not match the model");
    Tape<float> tape;
    std::vector<LayerTrace<float>> traces;
    model_forward(tape, m.spec, m.params, tape.leaf(image_to_tensor(img)),
                  /*train=*/false, &traces);
    if (i_layer < 0 || i_layer >= static_cast<int>(traces.size()))
      throw CLI::ValidationError(
          "--layer", "model has " + std::to_string(traces.size()) +
                         " activation layers, index " + std::to_string(i_layer) +
                         " is out of range");
    const auto& tr = traces[i_layer];
    const Tensor4<float> z = tape.value(tr.z);
    const Tensor4<float> gate =
        tr.gate >= 0 ? tape.value(tr.gate) : binary_gate(z);
    const Tensor4<float> product = tape.value(tr.out);
    fs::create_directories(i_dir);
    auto out = [&](const char* name) { return i_dir + "/" + name; };
    save_image(tile_grid(z), out("z.pgm"));
    save_image(tile_grid(gate), out("gate.pgm"));
    save_image(tile_grid(product), out("product.pgm"));
    if (i_raw) {
      dump_raw(z, out("z.bin"));
      dump_raw(gate, out("gate.bin"));
      dump_raw(product, out("product.bin"));
    }
    std::printf("wrote z/gate/product grids for spec layer %d to %s\n", tr.layer,
                i_dir.c_str());
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  init_runtime(argv);
  try {
    return run(argc, argv);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
