// Copyright (C) 2026 The Panofuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "panofuse/config.hpp"
#include "panofuse/depthfusion.hpp"
#include "panofuse/gateway.hpp"
#include "panofuse/geometry.hpp"
#include "panofuse/io.hpp"
#include "panofuse/ldi.hpp"
#include "panofuse/ply.hpp"
#include "panofuse/sampler.hpp"
#include "panofuse/synthetic.hpp"
#include "panofuse/wire.hpp"

namespace panofuse {

/// File names inside the output directory.
struct OutputPaths {
  std::filesystem::path dir;

  std::filesystem::path effective_config() const { return dir / "effective_config.toml"; }
  std::filesystem::path panorama_png() const { return dir / "panorama.png"; }
  std::filesystem::path panorama_pfm() const { return dir / "panorama.pfm"; }
  std::filesystem::path pano_diagnostics() const { return dir / "pano_diagnostics.json"; }
  std::filesystem::path depth_pfm() const { return dir / "depth.pfm"; }
  std::filesystem::path depth_preview() const { return dir / "depth_preview.png"; }
  std::filesystem::path theta_json() const { return dir / "theta.json"; }
  std::filesystem::path ldi_dir() const { return dir / "ldi"; }
  std::filesystem::path layer_color(int k) const { return layer(k, "color.png"); }
  std::filesystem::path layer_mask(int k) const { return layer(k, "mask.png"); }
  std::filesystem::path layer_filled(int k) const { return layer(k, "filled.png"); }
  std::filesystem::path layer_disparity(int k) const { return layer(k, "disparity.pfm"); }
  std::filesystem::path ldi_json() const { return ldi_dir() / "ldi.json"; }
  std::filesystem::path seeds_ply() const { return dir / "seeds.ply"; }
  std::filesystem::path marker(const std::string& stage) const {
    return dir / ".panofuse" / (stage + ".done");
  }

 private:
  std::filesystem::path layer(int k, const char* what) const {
    return ldi_dir() / ("layer" + std::to_string(k) + "_" + what);
  }
};

struct RunOptions {
  /// Skip stages of `all` whose completion marker matches the current config.
  bool resume = false;
  /// Progress lines; nullptr is silent.
  std::ostream* log = nullptr;
};

namespace detail {

inline void say(const RunOptions& opts, const std::string& line) {
  if (opts.log) *opts.log << line << std::endl;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw IoError("cannot write " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

/// Identifies the settings a stage ran with.
inline std::string fingerprint(const PipelineConfig& cfg) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%08x", wire::crc32_of(to_toml(cfg)));
  return buf;
}

inline bool stage_done(const OutputPaths& out, const std::string& stage, const PipelineConfig& cfg,
                       const std::vector<std::filesystem::path>& outputs) {
  const auto marker = out.marker(stage);
  if (!std::filesystem::is_regular_file(marker)) return false;
  if (read_text(marker) != fingerprint(cfg) + "\n") return false;
  for (const auto& p : outputs) {
    if (!std::filesystem::is_regular_file(p)) return false;
  }
  return true;
}

inline void mark_done(const OutputPaths& out, const std::string& stage, const PipelineConfig& cfg) {
  write_text(out.marker(stage), fingerprint(cfg) + "\n");
}

inline void clear_mark(const OutputPaths& out, const std::string& stage) {
  std::filesystem::remove(out.marker(stage));
}

inline wire::json seam_json(const SeamMetric& s) {
  return {{"boundary", s.boundary}, {"interior", s.interior}, {"ratio", s.ratio()}};
}

template <typename T>
void require_finite(const Image<T>& img, const std::string& what) {
  if (!all_finite(img)) throw NumericError(what + " contains non-finite values");
}

}  // namespace detail

inline CropLayout make_layout(const PipelineConfig& cfg) {
  PerspectiveCamera cam;
  cam.fov_deg = cfg.fov_deg;
  cam.width = cfg.crop_width;
  cam.height = cfg.crop_height;
  return build_cylinder_layout(cam, cfg.crops);
}

/// Where the input lands on the canvas (centred unless configured).
inline Rect input_placement(const PipelineConfig& cfg, const CropLayout& layout, int width,
                            int height) {
  const Rect r{cfg.input_x.value_or((layout.canvas_width - width) / 2),
               cfg.input_y.value_or((layout.canvas_height - height) / 2), width, height};
  if (r.x < 0 || r.y < 0 || r.x + r.width > layout.canvas_width ||
      r.y + r.height > layout.canvas_height) {
    throw ConfigError("input " + std::to_string(width) + "x" + std::to_string(height) + " at (" +
                      std::to_string(r.x) + ", " + std::to_string(r.y) +
                      ") does not fit the " + std::to_string(layout.canvas_width) + "x" +
                      std::to_string(layout.canvas_height) + " canvas");
  }
  return r;
}

inline std::unique_ptr<DenoiserOracle> make_denoiser(const PipelineConfig& cfg) {
  const int steps = cfg.sampler.inner_steps;
  if (cfg.synthetic) {
    if (cfg.synthetic_denoiser == "identity") {
      return std::make_unique<synthetic::IdentityDenoiser>(steps);
    }
    return std::make_unique<synthetic::PropagateDenoiser>(steps, cfg.propagate_radius);
  }
  const auto info = health(cfg.endpoint);
  if (info.steps > 0 && info.steps != steps) {
    throw ConfigError("oracle service at " + cfg.endpoint.base_url + " runs " +
                      std::to_string(info.steps) + " steps, config asks for " +
                      std::to_string(steps));
  }
  if (info.max_crop_size > 0 &&
      (cfg.crop_width > info.max_crop_size || cfg.crop_height > info.max_crop_size)) {
    throw ConfigError("crop size exceeds the service limit of " +
                      std::to_string(info.max_crop_size));
  }
  return std::make_unique<RemoteDenoiser>(cfg.endpoint, steps);
}

inline std::unique_ptr<DepthOracle> make_depth_oracle(const PipelineConfig& cfg) {
  if (cfg.synthetic) {
    if (cfg.synthetic_depth == "constant") {
      return std::make_unique<synthetic::ConstantDepthOracle>(1.0f);
    }
    if (cfg.synthetic_depth == "luma_distorted") {
      return std::make_unique<synthetic::LumaDepthOracle>(
          synthetic::LumaDepthOracle::distorted(cfg.crops));
    }
    return std::make_unique<synthetic::LumaDepthOracle>();
  }
  health(cfg.endpoint);
  return std::make_unique<RemoteDepthOracle>(cfg.endpoint, cfg.sampler.seed);
}

inline SamplerConfig sampler_config(const PipelineConfig& cfg) {
  auto s = cfg.sampler;
  s.threads = cfg.threads;
  return s;
}

inline FusionConfig fusion_config(const PipelineConfig& cfg) {
  auto f = cfg.depth;
  f.threads = cfg.threads;
  return f;
}

/// Panorama generation: panorama.png (16-bit), panorama.pfm (lossless) and
/// per-iteration diagnostics.
inline PanoramaResult cmd_pano(const PipelineConfig& cfg, const DenoiserOracle& oracle,
                               const RunOptions& opts = {}) {
  cfg.validate();
  const OutputPaths out{cfg.output_dir};
  if (cfg.input.empty()) throw ConfigError("no input image configured");
  const auto input = io::read_image(cfg.input);
  if (input.channels() != 3) {
    throw DimensionError("input image " + cfg.input.string() + " must be RGB");
  }
  const auto layout = make_layout(cfg);
  const auto placement = input_placement(cfg, layout, input.width(), input.height());
  detail::clear_mark(out, "pano");
  detail::write_text(out.effective_config(), to_toml(cfg));
  detail::say(opts, "pano: " + std::to_string(layout.canvas_width) + "x" +
                        std::to_string(layout.canvas_height) + " canvas, " +
                        std::to_string(layout.n()) + " crops, " +
                        std::to_string(cfg.sampler.outer_iters) + " outer iterations");
  auto result = run(input, placement, oracle, layout, sampler_config(cfg));
  detail::require_finite(result.panorama, "panorama");

  wire::json iterations = wire::json::array();
  for (const auto& it : result.iterations) {
    iterations.push_back({{"iteration", it.iteration},
                          {"l_change_rmse", it.l_change_rmse},
                          {"seam", detail::seam_json(it.seam)}});
  }
  const wire::json diag{
      {"canvas", {{"width", layout.canvas_width}, {"height", layout.canvas_height}}},
      {"input_rect",
       {{"x", placement.x}, {"y", placement.y}, {"width", placement.width},
        {"height", placement.height}}},
      {"seed", cfg.sampler.seed},
      {"generation", result.generation},
      {"iterations", iterations}};
  io::write_png16(out.panorama_png(), result.panorama);
  io::write_pfm(out.panorama_pfm(), result.panorama);
  detail::write_text(out.pano_diagnostics(), diag.dump(2) + "\n");
  detail::mark_done(out, "pano", cfg);
  return result;
}

/// Reads a panorama written by cmd_pano (PFM preferred, any image otherwise).
inline ImageF load_panorama(const std::filesystem::path& path, const CropLayout& layout) {
  const auto pano = path.extension() == ".pfm" ? io::read_pfm(path) : io::read_image(path);
  if (pano.width() != layout.canvas_width || pano.height() != layout.canvas_height) {
    throw DimensionError("panorama " + path.string() + " is " + std::to_string(pano.width()) +
                         "x" + std::to_string(pano.height()) + ", layout canvas is " +
                         std::to_string(layout.canvas_width) + "x" +
                         std::to_string(layout.canvas_height));
  }
  return pano;
}

/// Depth fusion: depth.pfm, depth_preview.png and theta.json.
inline FusionResult cmd_depth(const PipelineConfig& cfg, const std::filesystem::path& panorama,
                              const DepthOracle& oracle, const RunOptions& opts = {}) {
  cfg.validate();
  const OutputPaths out{cfg.output_dir};
  const auto layout = make_layout(cfg);
  const auto pano = load_panorama(panorama, layout);
  detail::clear_mark(out, "depth");
  detail::write_text(out.effective_config(), to_toml(cfg));
  detail::say(opts, "depth: " + std::to_string(layout.n()) + " patches, " +
                        std::to_string(cfg.depth.iters) + " iterations, " +
                        std::to_string(cfg.depth.segments) + " segments");
  auto result = fuse(pano, layout, oracle, fusion_config(cfg));
  detail::require_finite(result.depth.depth, "fused depth");
  for (const auto& w : result.warnings) detail::say(opts, "depth: warning: " + w);

  wire::json patches = wire::json::array();
  for (std::size_t i = 0; i < result.maps.size(); ++i) {
    const auto& m = result.maps[i];
    wire::json scales = wire::json::array();
    wire::json shifts = wire::json::array();
    for (int k = 0; k < m.segments(); ++k) {
      scales.push_back(m.scale(k));
      shifts.push_back(m.shift(k));
    }
    patches.push_back({{"index", i},
                       {"knots", std::vector<double>(m.knots().begin(), m.knots().end())},
                       {"values", std::vector<double>(m.values().begin(), m.values().end())},
                       {"scales", scales},
                       {"shifts", shifts}});
  }
  wire::json seams = wire::json::array();
  for (const auto& s : result.seams) seams.push_back(detail::seam_json(s));
  const wire::json theta{{"anchor", cfg.depth.anchor_index},
                         {"segments", cfg.depth.segments},
                         {"monotone", cfg.depth.monotone},
                         {"patches", patches},
                         {"objective", result.objective},
                         {"seams", seams},
                         {"warnings", result.warnings}};
  io::write_pfm(out.depth_pfm(), result.depth.depth);
  io::write_depth_preview(out.depth_preview(), result.depth.depth);
  detail::write_text(out.theta_json(), theta.dump(2) + "\n");
  detail::mark_done(out, "depth", cfg);
  return result;
}

struct LdiOutputs {
  LayeredDepthImage ldi;
  SeedSet seeds;
};

/// Layered depth image: per-layer colour / mask / fill / disparity files and
/// the Gaussian seeds PLY.
inline LdiOutputs cmd_ldi(const PipelineConfig& cfg, const std::filesystem::path& panorama,
                          const std::filesystem::path& depth, const RunOptions& opts = {}) {
  cfg.validate();
  const OutputPaths out{cfg.output_dir};
  const auto layout = make_layout(cfg);
  const auto pano = load_panorama(panorama, layout);
  const auto disparity = io::read_pfm_double(depth);
  if (!disparity.same_extent(pano)) {
    throw DimensionError("depth " + depth.string() + " is " + std::to_string(disparity.width()) +
                         "x" + std::to_string(disparity.height()) + ", panorama is " +
                         std::to_string(pano.width()) + "x" + std::to_string(pano.height()));
  }
  detail::require_finite(disparity, "depth " + depth.string());
  detail::clear_mark(out, "ldi");
  detail::write_text(out.effective_config(), to_toml(cfg));
  detail::say(opts, "ldi: " + std::to_string(cfg.cluster.k) + " layers");
  auto fill = cfg.fill;
  fill.threads = cfg.threads;
  LdiOutputs result;
  result.ldi = fill_holes(cluster_layers(pano, disparity, cfg.cluster, layout.cyclic), fill);
  for (const auto& w : result.ldi.warnings) detail::say(opts, "ldi: warning: " + w);
  result.seeds = init_gaussians(result.ldi, layout.cylinder);

  wire::json layers = wire::json::array();
  for (std::size_t k = 0; k < result.ldi.layers.size(); ++k) {
    const auto& layer = result.ldi.layers[k];
    const int id = static_cast<int>(k);
    io::write_png16(out.layer_color(id), layer.color);
    io::write_mask_png(out.layer_mask(id), layer.occupancy);
    io::write_mask_png(out.layer_filled(id), layer.filled);
    io::write_pfm(out.layer_disparity(id), layer.depth);
    std::size_t filled = 0;
    for (const auto v : layer.filled.data()) filled += v ? 1 : 0;
    layers.push_back({{"index", id},
                      {"mean_disparity", layer.mean_disparity},
                      {"occupied", layer.occupied_count},
                      {"filled", filled}});
  }
  const wire::json summary{{"layers", layers},
                           {"seeds", result.seeds.seeds.size()},
                           {"skipped", result.seeds.skipped},
                           {"warnings", result.ldi.warnings}};
  detail::write_text(out.ldi_json(), summary.dump(2) + "\n");
  export_ply(result.seeds.seeds, out.seeds_ply());
  detail::mark_done(out, "ldi", cfg);
  return result;
}

/// Runs pano, depth and ldi in order, stopping at the first failure. With
/// opts.resume, stages already completed under the same config are skipped
/// (a re-run stage invalidates the stages after it).
inline void cmd_all(const PipelineConfig& cfg, const RunOptions& opts = {},
                    const DenoiserOracle* denoiser = nullptr,
                    const DepthOracle* depth_oracle = nullptr) {
  cfg.validate();
  const OutputPaths out{cfg.output_dir};
  detail::write_text(out.effective_config(), to_toml(cfg));
  bool rerun = !opts.resume;

  const auto skip = [&](const std::string& stage, std::vector<std::filesystem::path> outputs) {
    if (rerun || !detail::stage_done(out, stage, cfg, outputs)) {
      rerun = true;
      return false;
    }
    detail::say(opts, stage + ": already complete, skipped");
    return true;
  };

  if (!skip("pano", {out.panorama_png(), out.panorama_pfm(), out.pano_diagnostics()})) {
    std::unique_ptr<DenoiserOracle> owned;
    if (!denoiser) denoiser = (owned = make_denoiser(cfg)).get();
    cmd_pano(cfg, *denoiser, opts);
  }
  if (!skip("depth", {out.depth_pfm(), out.depth_preview(), out.theta_json()})) {
    std::unique_ptr<DepthOracle> owned;
    if (!depth_oracle) depth_oracle = (owned = make_depth_oracle(cfg)).get();
    cmd_depth(cfg, out.panorama_pfm(), *depth_oracle, opts);
  }
  if (!skip("ldi", {out.ldi_json(), out.seeds_ply()})) {
    cmd_ldi(cfg, out.panorama_pfm(), out.depth_pfm(), opts);
  }
}

}  // namespace panofuse
